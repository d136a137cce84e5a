"""Run deeply recursive engine calls on a thread with a large stack."""
from __future__ import annotations

import sys
import threading
from functools import wraps

STACK_BYTES = 512 * 1024 * 1024
RECURSION_LIMIT = 1_000_000

_local = threading.local()
_spawn_lock = threading.Lock()


def deep(fn):
    @wraps(fn)
    def wrapper(*args, **kwargs):
        if getattr(_local, "active", False):
            return fn(*args, **kwargs)
        box = {}

        def run():
            _local.active = True
            try:
                box["value"] = fn(*args, **kwargs)
            except BaseException as exc:  # re-raised in the caller
                box["error"] = exc

        with _spawn_lock:
            if sys.getrecursionlimit() < RECURSION_LIMIT:
                sys.setrecursionlimit(RECURSION_LIMIT)
            old = threading.stack_size(STACK_BYTES)
            try:
                worker = threading.Thread(target=run, name=f"deep-{fn.__name__}")
                worker.start()
            finally:
                threading.stack_size(old)
        worker.join()
        if "error" in box:
            raise box["error"]
        return box["value"]

    return wrapper
