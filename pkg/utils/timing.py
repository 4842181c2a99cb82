from collections import defaultdict
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, Union
import logging
import time

import pandas as pd

logger = logging.getLogger(__name__)

STAGES = ("parse", "abstract", "markov", "classify")


class StageTimer:
    """Accumulates wall-clock seconds per pipeline stage."""

    def __init__(self):
        self.seconds: Dict[str, float] = defaultdict(float)
        self.calls: Dict[str, int] = defaultdict(int)

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] += time.perf_counter() - start
            self.calls[name] += 1

    def merge(self, other: "StageTimer") -> "StageTimer":
        for name, seconds in other.seconds.items():
            self.seconds[name] += seconds
            self.calls[name] += other.calls[name]
        return self

    def to_frame(self) -> pd.DataFrame:
        names = list(STAGES) + sorted(set(self.seconds) - set(STAGES))
        return pd.DataFrame({
            "stage": names,
            "seconds": [round(self.seconds.get(n, 0.0), 6) for n in names],
            "calls": [self.calls.get(n, 0) for n in names],
        })

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")
        total = sum(self.seconds.values())
        logger.info(f"Stage timings written to {path} (total {total:.2f}s)")
        return path
