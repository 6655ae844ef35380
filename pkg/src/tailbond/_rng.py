import numpy as np


def stream(seed, *keys):
    """Counter-based generator keyed by ``(seed, *keys)``.

    Philox is a counter-based bit generator; deriving its key from the seed
    and a stream id makes replication ``b`` draw the same numbers no matter
    which worker runs it or in what order.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]])
    return np.random.Generator(np.random.Philox(ss))


def parallel_map(func, items, threads=1):
    """Order-preserving map, optionally over a thread pool."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [func(i) for i in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
