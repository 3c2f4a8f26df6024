import os
import time
from contextlib import contextmanager
from pathlib import Path

# Cross-platform file locking
if os.name == 'nt':
    import msvcrt

    def _lock_file(fd, blocking=True):
        mode = msvcrt.LK_LOCK if blocking else msvcrt.LK_NBLCK
        msvcrt.locking(fd, mode, 1)

    def _unlock_file(fd):
        try:
            msvcrt.locking(fd, msvcrt.LK_UNLCK, 1)
        except OSError:
            pass
else:
    import fcntl

    def _lock_file(fd, blocking=True):
        flag = fcntl.LOCK_EX
        if not blocking:
            flag |= fcntl.LOCK_NB
        fcntl.flock(fd, flag)

    def _unlock_file(fd):
        try:
            fcntl.flock(fd, fcntl.LOCK_UN)
        except OSError:
            pass


class FileLockManager:
    """
    Keep two runs from writing into the same output directory

    The lock is a `.lock` file inside the directory, held for the duration
    of the run and removed on exit.
    """

    def __init__(self, timeout: float = 30.0):
        self.timeout = timeout

    @contextmanager
    def lock_directory(self, directory):
        """
        Usage:
            with lock_manager.lock_directory(out_dir):
                write_artifacts(out_dir)
        """
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        lock_path = path / '.lock'
        handle = open(lock_path, 'w')
        start_time = time.time()

        try:
            while True:
                try:
                    _lock_file(handle.fileno(), blocking=False)
                    break
                except OSError:
                    if time.time() - start_time > self.timeout:
                        raise TimeoutError(
                            f"Could not lock {directory} after {self.timeout}s; another run is writing there"
                        )
                    time.sleep(0.1)
            yield path
        finally:
            _unlock_file(handle.fileno())
            handle.close()
            try:
                lock_path.unlink()
            except OSError:
                pass

    def is_locked(self, directory) -> bool:
        lock_path = Path(directory) / '.lock'
        if not lock_path.exists():
            return False
        try:
            with open(lock_path, 'a') as handle:
                _lock_file(handle.fileno(), blocking=False)
                _unlock_file(handle.fileno())
            return False
        except OSError:
            return True


lock_manager = FileLockManager()
