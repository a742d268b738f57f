from collections import Counter, deque
from datetime import datetime
from typing import Deque, Dict, Iterable
import statistics

# Samples kept for the timing summaries
HISTORY_SIZE = 1000


def _summary(samples: Iterable[float]) -> Dict[str, float]:
    samples = list(samples)
    if not samples:
        return {"average": 0.0, "min": 0.0, "max": 0.0}
    return {
        "average": round(statistics.mean(samples), 2),
        "min": round(min(samples), 2),
        "max": round(max(samples), 2),
    }


def _percent(part: int, whole: int) -> float:
    return round(part / whole * 100, 2) if whole else 0.0


class StatsTracker:
    """Request timings of the HTTP surface and counters of detection runs"""

    def __init__(self):
        self.start_time = datetime.utcnow()
        self.response_times: Deque[float] = deque(maxlen=HISTORY_SIZE)
        self.endpoint_counts: Counter = Counter()
        self.status_codes: Counter = Counter()
        self.run_seconds: Deque[float] = deque(maxlen=HISTORY_SIZE)
        self.detection = Counter()

    @property
    def total_requests(self) -> int:
        return sum(self.status_codes.values())

    def record_request(self, endpoint: str, response_time: float, status_code: int):
        """Record one tracked request; response_time is in milliseconds"""
        self.response_times.append(response_time)
        self.endpoint_counts[endpoint] += 1
        self.status_codes[status_code] += 1

    def record_run(self, windows: int, failed: int, alarms: int, seconds: float):
        """Record one detection run over `windows` evaluated and `failed` skipped windows"""
        self.detection.update(runs=1, windows_evaluated=windows, windows_failed=failed, alarms_emitted=alarms)
        self.run_seconds.append(seconds)

    def get_stats(self) -> dict:
        total = self.total_requests
        ok = sum(count for status, count in self.status_codes.items() if 200 <= status < 400)
        timings = _summary(self.response_times)

        attempted = self.detection["windows_evaluated"] + self.detection["windows_failed"]
        ms_per_window = sum(self.run_seconds) * 1000 / attempted if attempted else 0.0

        return {
            "total_requests": total,
            "average_response_time": timings["average"],
            "min_response_time": timings["min"],
            "max_response_time": timings["max"],
            "success_rate": _percent(ok, total),
            "uptime_seconds": round((datetime.utcnow() - self.start_time).total_seconds(), 2),
            "endpoint_counts": dict(self.endpoint_counts),
            "status_code_distribution": dict(self.status_codes),
            "detection": {
                "runs": self.detection["runs"],
                "windows_evaluated": self.detection["windows_evaluated"],
                "windows_failed": self.detection["windows_failed"],
                "window_failure_rate": _percent(self.detection["windows_failed"], attempted),
                "alarms_emitted": self.detection["alarms_emitted"],
                "ms_per_window": round(ms_per_window, 2),
                "run_seconds": _summary(self.run_seconds),
            },
            "timestamp": datetime.utcnow().isoformat(),
        }

    def reset_stats(self):
        self.__init__()


stats_tracker = StatsTracker()
