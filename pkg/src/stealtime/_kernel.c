/* Serially dependent add chain timed with CLOCK_MONOTONIC.
 * The add instruction and the unrolled block are substituted by _kernel.py. */
#include <stdint.h>
#include <time.h>

#define ADD __asm__ __volatile__(ADD_INSN : "+r"(acc) : "r"(one));

int64_t stealtime_spin(uint64_t iterations, uint64_t *acc_out)
{
    struct timespec before, after;
    uint64_t acc = 0;
    uint64_t one = 1;

    /* keep "one" opaque so the adds stay register-register */
    __asm__ __volatile__("" : "+r"(one));

    if (clock_gettime(CLOCK_MONOTONIC, &before) != 0)
        return -1;
    for (uint64_t i = iterations; i != 0; --i) {
        ADD_BLOCK
    }
    if (clock_gettime(CLOCK_MONOTONIC, &after) != 0)
        return -1;

    *acc_out = acc;
    return (int64_t)(after.tv_sec - before.tv_sec) * 1000000000LL
           + (int64_t)(after.tv_nsec - before.tv_nsec);
}
