"""Blocking primitives shared by vfs, netstack, and the kernel.

A handler that cannot complete raises WouldBlock(waitpoint); the kernel
parks the issuing thread on the WaitPoint and retries the syscall after
wake() marks its waiters runnable-for-retry.
"""

from __future__ import annotations


class WaitPoint:
    """A wake list for one blocking condition (readable, acceptable, time)."""

    __slots__ = ("waiters",)

    def __init__(self):
        self.waiters: list = []

    def add(self, waiter) -> None:
        if waiter not in self.waiters:
            self.waiters.append(waiter)

    def discard(self, waiter) -> None:
        if waiter in self.waiters:
            self.waiters.remove(waiter)

    def wake(self) -> None:
        """Mark every parked waiter for retry; the scheduler re-dispatches
        at its next visit."""
        waiters, self.waiters = self.waiters, []
        for w in waiters:
            w.wake()


class WouldBlock(Exception):
    """Internal: syscall cannot complete now; retry after waitpoint wakes."""

    def __init__(self, waitpoint: WaitPoint):
        super().__init__()
        self.waitpoint = waitpoint
