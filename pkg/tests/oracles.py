"""Independent reference models used to derive expected values.

Nothing here imports the package's simulator or estimator.
"""
from fractions import Fraction


def brute_force_runs(t_m_ms, guest_fraction, host_busy, horizon_ms):
    """Tick-by-tick (1 ms) two-level round-robin with a 1 ms quantum.

    ``host_busy(t_ms) -> bool`` says whether the host competitor wants the
    CPU during tick ``t_ms``. Returns a list of dicts with ms-valued
    ``start``, ``t_r``, ``steal``, ``guest`` for every completed run.
    """
    g = Fraction(guest_fraction)
    runs = []
    owner_prev = "H"
    m_ticks = g_ticks = 0
    start = 0
    done = steal = guest = 0
    for t in range(horizon_ms):
        if host_busy(t) and owner_prev != "H":
            owner_prev = "H"
            steal += 1
            continue
        owner_prev = "VM"
        if g > 0 and g_ticks < g * m_ticks:
            g_ticks += 1
            guest += 1
            continue
        m_ticks += 1
        done += 1
        if done == t_m_ms:
            runs.append({"start": start, "t_r": t + 1 - start, "steal": steal, "guest": guest})
            start, done, steal, guest = t + 1, 0, 0, 0
    return runs


def alternating_host(idle_ms, busy_ms):
    period = idle_ms + busy_ms
    return lambda t: t % period >= idle_ms


def fair_share_t_r(t_m, guest_fraction, host_busy):
    """Closed form for a run under constant contention."""
    t = t_m * (1 + Fraction(guest_fraction))
    return 2 * t if host_busy else t
