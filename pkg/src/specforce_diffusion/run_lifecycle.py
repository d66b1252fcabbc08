"""
Run lifecycle management for graceful interruption.

SIGINT and SIGTERM do not kill a run: they set a stop flag that the training
loops poll at epoch boundaries, so the loop writes a final checkpoint and
returns. Cleanup callbacks (manifest writing) run once when the command ends,
whether it succeeded, failed or was interrupted.
"""

import logging
import signal
import threading
from typing import Callable, List

logger = logging.getLogger(__name__)

HANDLED_SIGNALS = (signal.SIGINT, signal.SIGTERM)


class RunLifecycleManager:
    """Stop flag, signal handlers and cleanup callbacks for one command."""

    def __init__(self):
        self.stop_event = threading.Event()
        self.cleanup_callbacks: List[Callable[[], None]] = []
        self._previous_handlers = {}
        self._cleaned_up = False

    def add_cleanup_callback(self, callback: Callable[[], None]) -> None:
        self.cleanup_callbacks.append(callback)

    def should_stop(self) -> bool:
        return self.stop_event.is_set()

    def request_stop(self) -> None:
        if not self.stop_event.is_set():
            logger.info("Stop requested; the run will end at the next epoch boundary")
            self.stop_event.set()

    def _signal_handler(self, signum, frame):
        signame = signal.Signals(signum).name
        if self.stop_event.is_set():
            logger.warning(f"Received {signame} again, aborting")
            raise KeyboardInterrupt
        logger.info(f"Received signal {signame} ({signum}), finishing the current epoch...")
        self.request_stop()

    def setup_signal_handlers(self) -> None:
        """Install the handlers; only possible from the main thread."""
        if threading.current_thread() is not threading.main_thread():
            logger.debug("Not on the main thread; signal handlers left untouched")
            return
        for sig in HANDLED_SIGNALS:
            self._previous_handlers[sig] = signal.signal(sig, self._signal_handler)

    def restore_signal_handlers(self) -> None:
        for sig, handler in self._previous_handlers.items():
            signal.signal(sig, handler)
        self._previous_handlers.clear()

    def cleanup(self) -> None:
        """Run every registered callback once; failures are logged, not raised."""
        if self._cleaned_up:
            return
        self._cleaned_up = True
        for callback in self.cleanup_callbacks:
            try:
                callback()
            except Exception as e:
                logger.error(f"Error during cleanup callback: {e}")
        self.restore_signal_handlers()

    def __enter__(self) -> "RunLifecycleManager":
        self.setup_signal_handlers()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.cleanup()
