"""Build and load the dependent-add kernel.

The kernel is a few lines of C with inline assembly, compiled on first use
with the system C compiler and loaded through ctypes. A pure-Python kernel
exists for callers that only need "some CPU-bound work" (the load generator)
and must run where no compiler is available; its CPI is nowhere near 1, so
the microbenchmark refuses it unless asked explicitly.
"""
import ctypes
import hashlib
import os
import platform
import shutil
import subprocess
import tempfile
import time
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .exceptions import ClockError, KernelUnavailableError

# register-register adds: some cores fold add-immediate chains in the renamer
_ADD_INSN = {
    "x86_64": '"add %1, %0"',
    "amd64": '"add %1, %0"',
    "aarch64": '"add %0, %0, %1"',
    "arm64": '"add %0, %0, %1"',
}


def _cache_dir():
    root = os.environ.get("STEALTIME_CACHE_DIR")
    if root:
        path = Path(root)
    else:
        path = Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "stealtime"
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError:
        path = Path(tempfile.gettempdir()) / f"stealtime-{os.getuid()}"
        path.mkdir(parents=True, exist_ok=True)
    return path


def render_source(inner_adds):
    machine = platform.machine().lower()
    if machine not in _ADD_INSN:
        raise KernelUnavailableError(f"no add-chain instruction known for {machine!r}")
    template = resources.files("stealtime").joinpath("_kernel.c").read_text()
    return (
        template.replace("ADD_INSN", _ADD_INSN[machine])
        .replace("ADD_BLOCK", "ADD " * inner_adds)
    )


class NativeKernel:
    """ctypes wrapper around the compiled add chain for one ``inner_adds`` value."""

    native = True

    def __init__(self, inner_adds):
        self.inner_adds = inner_adds
        source = render_source(inner_adds)
        digest = hashlib.sha256(source.encode()).hexdigest()[:16]
        lib_path = _cache_dir() / f"spin_{inner_adds}_{digest}.so"
        if not lib_path.exists():
            _compile(source, lib_path)
        lib = ctypes.CDLL(str(lib_path))
        lib.stealtime_spin.restype = ctypes.c_int64
        lib.stealtime_spin.argtypes = [ctypes.c_uint64, ctypes.POINTER(ctypes.c_uint64)]
        self._spin = lib.stealtime_spin
        self.last_accumulator = 0

    def run(self, iterations):
        """Run the loop ``iterations`` times; return elapsed monotonic nanoseconds."""
        acc = ctypes.c_uint64()
        elapsed = self._spin(iterations, ctypes.byref(acc))
        if elapsed < 0:
            raise ClockError("clock_gettime(CLOCK_MONOTONIC) failed")
        self.last_accumulator = acc.value
        return elapsed


class PythonKernel:
    """Interpreted fallback. Dependent, but with an interpreter-sized CPI."""

    native = False

    def __init__(self, inner_adds):
        self.inner_adds = inner_adds
        body = "\n".join(["        acc = acc + one"] * inner_adds)
        code = f"def _spin(n, one):\n    acc = 0\n    for _ in range(n):\n{body}\n    return acc\n"
        namespace = {}
        exec(compile(code, f"<spin_{inner_adds}>", "exec"), namespace)
        self._spin = namespace["_spin"]
        self.last_accumulator = 0

    def run(self, iterations):
        try:
            before = time.monotonic_ns()
            acc = self._spin(iterations, 1)
            after = time.monotonic_ns()
        except OSError as exc:
            raise ClockError(str(exc)) from exc
        self.last_accumulator = acc
        return after - before


def _compile(source, lib_path):
    cc = os.environ.get("CC") or shutil.which("cc") or shutil.which("gcc") or shutil.which("clang")
    if cc is None:
        raise KernelUnavailableError("no C compiler found (set CC)")
    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / "spin.c"
        src.write_text(source)
        out = lib_path.with_name(f"{lib_path.name}.{os.getpid()}.tmp")
        # -O1 is enough: the asm is volatile, only the loop counter is optimized
        cmd = [cc, "-O1", "-shared", "-fPIC", "-o", str(out), str(src)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise KernelUnavailableError(f"kernel build failed: {proc.stderr.strip()}")
        os.replace(out, lib_path)


@lru_cache(maxsize=None)
def get_kernel(inner_adds, native=True):
    if native:
        return NativeKernel(inner_adds)
    return PythonKernel(inner_adds)


def best_kernel(inner_adds):
    """Native kernel if it can be built, otherwise the Python one."""
    try:
        return get_kernel(inner_adds, True)
    except KernelUnavailableError:
        return get_kernel(inner_adds, False)
