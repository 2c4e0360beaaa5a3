"""
Log Manager - Console logging setup and per-run log files
Each CLI run can be mirrored to its own timestamped file under the log directory
"""

import logging
import platform
import sys
from datetime import datetime
from pathlib import Path

import psutil

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def setup_logging(verbosity=0, stream=None):
    """Configure the package logger for console output

    Args:
        verbosity: 0 → WARNING, 1 → INFO, 2+ → DEBUG
        stream: Output stream (defaults to stderr)
    """
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG

    logger = logging.getLogger("src")
    logger.setLevel(level)
    for handler in list(logger.handlers):
        if getattr(handler, "_priorshift_console", False):
            logger.removeHandler(handler)

    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._priorshift_console = True
    logger.addHandler(handler)
    return logger


class LogManager:
    """Manages one log file per run"""

    def __init__(self, base_log_dir="logs"):
        """
        Initialize log manager

        Args:
            base_log_dir: Base directory for storing logs
        """
        self.base_log_dir = Path(base_log_dir)
        self.base_log_dir.mkdir(parents=True, exist_ok=True)
        self.current_log_file = None
        self._handler = None

    def create_log_file(self, run_name, add_timestamp=True):
        """
        Create a new log file for a run

        Args:
            run_name: Name of the run (usually the subcommand)
            add_timestamp: Whether to add timestamp to filename

        Returns:
            Path to the created log file
        """
        if add_timestamp:
            timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            filename = f"{run_name}_{timestamp}.log"
        else:
            filename = f"{run_name}.log"

        log_path = self.base_log_dir / filename

        memory = psutil.virtual_memory()
        with open(log_path, "w") as f:
            f.write("=" * 80 + "\n")
            f.write(f"Run: {run_name}\n")
            f.write(f"Start Time: {datetime.now().isoformat()}\n")
            f.write(f"Host: {platform.node()} ({platform.python_version()})\n")
            f.write(
                f"CPUs: {psutil.cpu_count(logical=False)} physical / "
                f"{psutil.cpu_count()} logical, "
                f"memory {memory.total / 1024 ** 3:.1f} GiB\n"
            )
            f.write("=" * 80 + "\n\n")

        return str(log_path)

    def start_logging(self, log_file_path, level=logging.DEBUG):
        """
        Attach a file handler writing the package log to log_file_path

        Args:
            log_file_path: Path to log file
            level: Minimum level recorded in the file
        """
        self.current_log_file = log_file_path
        self._handler = logging.FileHandler(log_file_path, mode="a")
        self._handler.setLevel(level)
        self._handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger = logging.getLogger("src")
        logger.addHandler(self._handler)
        if logger.level == logging.NOTSET or logger.level > level:
            logger.setLevel(level)

    def stop_logging(self):
        """Detach the file handler and write the footer"""
        if self._handler is None:
            return

        logging.getLogger("src").removeHandler(self._handler)
        self._handler.close()
        self._handler = None

        with open(self.current_log_file, "a") as f:
            f.write("\n" + "=" * 80 + "\n")
            f.write(f"End Time: {datetime.now().isoformat()}\n")
            f.write("=" * 80 + "\n")
        self.current_log_file = None
