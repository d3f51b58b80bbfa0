"""Thread-pool map honouring the ``MICROKIN_THREADS`` cap."""
import os
from concurrent.futures import ThreadPoolExecutor


def thread_count():
    env = os.environ.get("MICROKIN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))


def pmap(fn, items):
    """Ordered parallel map; results come back in input order."""
    items = list(items)
    workers = min(thread_count(), len(items)) or 1
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
