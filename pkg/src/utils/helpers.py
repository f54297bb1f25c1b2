from dotenv import load_dotenv
import os
import time
import logging
from datetime import timedelta
from typing import List, Optional, Tuple

# Load the environment variables at module load time.
load_dotenv()

# Set up the logging configuration.
logging.basicConfig(level=getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper()))


def get_env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    try:
        return int(value)
    except ValueError:
        logging.warning(f"Ignoring {name}={value!r}: not an integer, using {default}")
        return default


def get_env_floats(name: str, default: Tuple[float, ...]) -> Tuple[float, ...]:
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    try:
        parsed = tuple(float(part) for part in value.split(","))
    except ValueError:
        logging.warning(f"Ignoring {name}={value!r}: not a list of reals")
        return default
    if len(parsed) != len(default):
        logging.warning(
            f"Ignoring {name}={value!r}: "
            f"expected {len(default)} values, got {len(parsed)}"
        )
        return default
    return parsed


def calculate_median(times: List[float]) -> float:
    times = sorted(times)
    mid_index = len(times) // 2
    if len(times) % 2 == 0:
        return (times[mid_index - 1] + times[mid_index]) / 2
    else:
        return times[mid_index]


def log_progress(
    times: List[float],
    completed: int,
    task_count: int,
    start_time: float,
    label: str = "steps",
    extra: Optional[str] = None,
) -> None:
    elapsed_time = max(time.perf_counter() - start_time, 1e-9)
    percentage = completed / max(task_count, 1) * 100
    eta = timedelta(
        seconds=int(elapsed_time / max(completed, 1) * (task_count - completed))
    )
    avg_time = sum(times) / max(len(times), 1)
    median_time = calculate_median(times) if times else 0.0
    message = (
        f"Done: {completed}, Total: {task_count}, {percentage:.2f}%. ETA: {eta} | "
        f"avg {avg_time:.4f} s | med {median_time:.4f} s | "
        f"{completed / elapsed_time:.2f} {label}/s"
    )
    if extra:
        message = f"{message} | {extra}"
    logging.info(message)


def log_summary(times: List[float], label: str = "step") -> None:
    try:
        avg_time = sum(times) / len(times)
        median_time = calculate_median(times)
        logging.info(f"Average time per {label}: {avg_time:.6f} s")
        logging.info(f"Median time per {label}: {median_time:.6f} s")
    except ZeroDivisionError:
        pass
