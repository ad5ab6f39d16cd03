"""Deterministic seed derivation.

Child seeds come from a splitmix64 chain: starting from the master seed,
each index is mixed in as
``state = splitmix64(state * 0x9E3779B97F4A7C15 + splitmix64(index))``
(mod 2**64); the multiplication keeps the mix order-sensitive.
The result does not depend on the order in which work items are executed.
"""

_MASK = (1 << 64) - 1


def splitmix64(x):
    """One splitmix64 output for state ``x`` (the state is advanced first)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master, *indices):
    """64-bit child seed for the work item at ``indices`` under ``master``."""
    state = splitmix64(int(master) & _MASK)
    for i in indices:
        state = splitmix64((state * 0x9E3779B97F4A7C15 + splitmix64(int(i) & _MASK)) & _MASK)
    return state
