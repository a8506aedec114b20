"""
Counter-based random streams.

A stream is fixed by (master seed, domain, counters), never by the order in
which replications are scheduled, so results do not depend on parallelism.
"""

import numpy as np

DOMAINS = {
    "fbm": 1,
    "walk": 2,
    "oracle": 4,
}


def stream_key(domain, *counters):
    """Spawn key (domain id, *counters) identifying one stream."""
    try:
        domain_id = DOMAINS[domain]
    except KeyError:
        raise ValueError(f"unknown seed domain '{domain}'; expected one of {sorted(DOMAINS)}") from None
    if any(int(c) < 0 for c in counters):
        raise ValueError(f"stream counters must be nonnegative, got {counters}")
    return (domain_id, *(int(c) for c in counters))


def seed_sequence(master_seed, domain, *counters):
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=stream_key(domain, *counters))


def stream(master_seed, domain, *counters):
    """Philox generator for one (domain, counters) stream of the master seed."""
    return np.random.Generator(np.random.Philox(seed_sequence(master_seed, domain, *counters)))
