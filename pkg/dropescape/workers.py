"""Thread-pool job runner used by boosting, stability trials, audits and the bench grid.

Each job is wrapped in a :class:`CellWorker` whose ``run`` never raises: the
outcome (value or error text) is captured and handed back, and the pool
returns outcomes in submission order so results do not depend on the number
of threads.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from tqdm import tqdm

logger = logging.getLogger(__name__)


@dataclass
class JobOutcome:
    key: object
    value: object = None
    error: str = None
    exception: BaseException = None

    @property
    def ok(self):
        return self.error is None


class CellWorker:
    def __init__(self, key, fn, *args, **kwargs):
        self.key = key
        self.fn = fn
        self.args = args
        self.kwargs = kwargs
        self._is_cancelled = False

    def cancel(self):
        self._is_cancelled = True

    def run(self):
        outcome = JobOutcome(self.key)
        if self._is_cancelled:
            outcome.error = "cancelled"
            return outcome
        try:
            outcome.value = self.fn(*self.args, **self.kwargs)
        except Exception as e:
            logger.warning("job %s failed: %s", self.key, e)
            outcome.error = str(e) or type(e).__name__
            outcome.exception = e
        return outcome


class WorkerPool:
    def __init__(self, threads=1, progress=False, desc=None):
        self.threads = max(1, int(threads))
        self.progress = progress
        self.desc = desc

    def run(self, workers, strict=False):
        """Run all workers; with ``strict`` the first failure is re-raised."""
        workers = list(workers)
        bar = tqdm(total=len(workers), desc=self.desc, disable=not self.progress, leave=False)

        def _done(outcome):
            bar.update(1)
            if strict and not outcome.ok:
                for w in workers:
                    w.cancel()

        try:
            if self.threads == 1:
                outcomes = []
                for w in workers:
                    outcomes.append(w.run())
                    _done(outcomes[-1])
            else:
                with ThreadPoolExecutor(max_workers=self.threads) as pool:
                    futures = [pool.submit(w.run) for w in workers]
                    for f in futures:
                        f.add_done_callback(lambda f: _done(f.result()))
                    outcomes = [f.result() for f in futures]
        finally:
            bar.close()
        if strict:
            failed = [o for o in outcomes if not o.ok and o.exception is not None]
            if failed:
                raise failed[0].exception
        return outcomes

    def map(self, fn, items, strict=True):
        """Apply ``fn`` to each item; returns values in input order."""
        outcomes = self.run([CellWorker(i, fn, item) for i, item in enumerate(items)], strict=strict)
        return [o.value for o in outcomes]
