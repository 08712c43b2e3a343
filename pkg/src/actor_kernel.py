"""Minimal virtual-actor runtime.

Actors are addressed by `ActorId`, activated on their first message, and process their
mailbox one message at a time. Every actor is pinned to a shard. A shard stands for one
server: a bounded pool of worker slots, where each turn holds a slot for a fixed service
time before its handler runs. Messages between shards are delayed by the network latency
and cost the receiving shard extra service time.
"""

from __future__ import annotations

import asyncio
import time
from collections.abc import Awaitable, Callable
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from apify import Actor

from src.errors import KernelStopped, ReplyTimeout
from src.models import ActorId, ActorKind, CellId

_current_actor: ContextVar[ActorId | None] = ContextVar("current_actor", default=None)
_held_shard: ContextVar[int | None] = ContextVar("held_shard", default=None)


def current_actor() -> ActorId | None:
    """Actor whose turn is running in the calling context, if any."""
    return _current_actor.get()


def current_shard() -> int | None:
    """Shard whose worker slot the calling context holds, if any."""
    return _held_shard.get()


@dataclass(slots=True)
class Message:
    method: str
    args: tuple[Any, ...]
    kwargs: dict[str, Any]
    sender: ActorId | None
    reply: asyncio.Future[Any] | None
    sent_at: int
    deliver_at: float
    remote: bool = False


class ClockSource:
    """Process-wide monotone nanosecond clock with a fixed skew per shard.

    `now()` never returns the same value twice, so timestamps taken anywhere in the process
    are totally ordered. Skews model loosely synchronized server clocks and only shift when
    timers fire.
    """

    def __init__(self, num_shards: int = 1, max_skew_ns: int = 0, seed: int = 0):
        if max_skew_ns > 0:
            rng = np.random.default_rng(seed)
            draws = rng.integers(-max_skew_ns, max_skew_ns, endpoint=True, size=num_shards)
            self._skews = tuple(int(v) for v in draws)
        else:
            self._skews = (0,) * num_shards
        self.max_skew_ns = max_skew_ns
        self._last = 0
        self.origin_ns = self.now()

    def now(self) -> int:
        self._last = max(self._last + 1, time.monotonic_ns())
        return self._last

    def skew_of(self, shard: int) -> int:
        return self._skews[shard]

    def local_now(self, shard: int) -> int:
        return self.now() + self.skew_of(shard)

    def tick_time(self, tick: int, interval_ns: int) -> int:
        """Nominal global time of grid tick `tick`."""
        return self.origin_ns + tick * interval_ns

    def next_tick(self, interval_ns: int, margin_ns: int = 0) -> int:
        """Smallest tick >= 1 that is at least `margin_ns` in the future."""
        elapsed = self.now() + margin_ns - self.origin_ns
        return max(1, elapsed // interval_ns + 1)


@dataclass
class StreamChannel:
    """Broadcast channel of one cell; its monitoring actor is the only publisher"""

    cell: CellId
    subscribers: dict[ActorId, None] = field(default_factory=dict)


@dataclass
class TimerHandle:
    """Periodic timer delivering `method(tick)` messages to its owner"""

    owner: ActorId
    interval_ns: int
    jitter_ns: int
    first_tick: int
    method: str = "timer_fire"
    fire_times: list[int] = field(default_factory=list)
    cancelled: bool = False
    _task: asyncio.Task[None] | None = None

    def cancel(self) -> None:
        self.cancelled = True
        if self._task is not None:
            self._task.cancel()


class ActorBase:
    """Base class for kernel-hosted actors.

    A message `m` is dispatched to the coroutine `handle_m`; its return value resolves the
    sender's reply future.
    """

    def __init__(self, actor_id: ActorId, kernel: Kernel):
        self.id = actor_id
        self.kernel = kernel

    @property
    def shard(self) -> int:
        return self.kernel.shard_of(self.id)

    async def receive(self, message: Message) -> Any:
        handler = getattr(self, f"handle_{message.method}", None)
        if handler is None:
            raise AttributeError(f"{self.id} has no handler for {message.method!r}")
        return await handler(*message.args, **message.kwargs)


ActorFactory = Callable[[ActorId, "Kernel"], ActorBase]


@dataclass(slots=True)
class _Activation:
    actor: ActorBase
    shard: int
    queue: asyncio.Queue[Message | None]
    task: asyncio.Task[None] | None = None
    busy: bool = False
    processed: int = 0


@dataclass
class _Shard:
    index: int
    workers: asyncio.Semaphore
    turns: int = 0
    remote_turns: int = 0
    busy_ns: int = 0


class Kernel:
    """Hosts actors, routes messages, broadcasts stream updates and drives timers."""

    def __init__(
        self,
        *,
        num_shards: int = 1,
        clock: ClockSource | None = None,
        shard_resolver: Callable[[ActorId], int] | None = None,
        workers_per_shard: int = 4,
        cross_shard_latency_ns: int = 0,
        turn_cost_ns: int = 0,
        remote_cost_ns: int = 0,
        reply_timeout_s: float | None = None,
        seed: int = 0,
    ):
        self.num_shards = num_shards
        self.clock = clock or ClockSource(num_shards)
        self.cross_shard_latency_ns = cross_shard_latency_ns
        self.turn_cost_ns = turn_cost_ns
        self.remote_cost_ns = remote_cost_ns
        self.reply_timeout_s = reply_timeout_s
        self._resolve_shard = shard_resolver or (lambda _aid: 0)
        self._shards = [_Shard(i, asyncio.Semaphore(workers_per_shard)) for i in range(num_shards)]
        self._factories: dict[ActorKind, ActorFactory] = {}
        self._activations: dict[ActorId, _Activation] = {}
        self._channels: dict[CellId, StreamChannel] = {}
        self._timers: list[TimerHandle] = []
        self._rng = np.random.default_rng(seed)
        self._inflight = 0
        self._idle = asyncio.Event()
        self._idle.set()
        self._stopped = False
        self.messages_sent = 0
        self.messages_processed = 0

    # Registration

    def register_factory(self, kind: ActorKind, factory: ActorFactory) -> None:
        self._factories[kind] = factory

    def shard_of(self, actor_id: ActorId) -> int:
        activation = self._activations.get(actor_id)
        if activation is not None:
            return activation.shard
        return self._resolve_shard(actor_id)

    def live_actors(self) -> set[ActorId]:
        return set(self._activations)

    def get_actor(self, actor_id: ActorId) -> ActorBase | None:
        activation = self._activations.get(actor_id)
        return activation.actor if activation else None

    def shard_turns(self) -> list[int]:
        """Number of actor turns executed per shard."""
        return [shard.turns for shard in self._shards]

    def shard_remote_turns(self) -> list[int]:
        """Number of turns per shard that handled a message sent from another shard."""
        return [shard.remote_turns for shard in self._shards]

    def shard_busy_s(self) -> list[float]:
        """Service time charged to each shard's worker slots, in seconds."""
        return [shard.busy_ns / 1e9 for shard in self._shards]

    @property
    def stopped(self) -> bool:
        return self._stopped

    def _activate(self, actor_id: ActorId) -> _Activation:
        factory = self._factories.get(actor_id.kind)
        if factory is None:
            raise KeyError(f"no factory registered for {actor_id.kind.value} actors")
        shard = self._resolve_shard(actor_id)
        if not 0 <= shard < self.num_shards:
            raise ValueError(f"{actor_id} resolved to unknown shard {shard}")
        activation = _Activation(actor=factory(actor_id, self), shard=shard, queue=asyncio.Queue())
        self._activations[actor_id] = activation
        activation.task = asyncio.create_task(self._run(activation), name=str(actor_id))
        Actor.log.debug(f"Activated {actor_id} on shard {shard}")
        return activation

    # Messaging

    def _enqueue(
        self,
        target: ActorId,
        method: str,
        args: tuple[Any, ...],
        kwargs: dict[str, Any],
        want_reply: bool,
    ) -> asyncio.Future[Any] | None:
        if self._stopped:
            raise KernelStopped(f"cannot deliver {method!r} to {target}: kernel stopped")
        loop = asyncio.get_running_loop()
        activation = self._activations.get(target) or self._activate(target)

        sender = _current_actor.get()
        remote = sender is not None and self.shard_of(sender) != activation.shard
        delay_s = self.cross_shard_latency_ns / 1e9 if remote else 0.0

        reply = loop.create_future() if want_reply else None
        message = Message(
            method=method,
            args=args,
            kwargs=kwargs,
            sender=sender,
            reply=reply,
            sent_at=self.clock.now(),
            deliver_at=loop.time() + delay_s,
            remote=remote,
        )
        self.messages_sent += 1
        self._inflight += 1
        self._idle.clear()
        activation.queue.put_nowait(message)
        return reply

    def send(self, target: ActorId, method: str, *args: Any, **kwargs: Any) -> asyncio.Future[Any]:
        """Enqueue a request and return the future its reply resolves.

        Delivery order per sender and receiver equals send order. The target is activated if
        it has never been referenced before.
        """
        reply = self._enqueue(target, method, args, kwargs, want_reply=True)
        assert reply is not None
        return reply

    def tell(self, target: ActorId, method: str, *args: Any, **kwargs: Any) -> None:
        """Fire-and-forget send; handler failures are logged by the receiver."""
        self._enqueue(target, method, args, kwargs, want_reply=False)

    def tell_later(self, delay_s: float, target: ActorId, method: str, *args: Any) -> None:
        """Fire-and-forget send after `delay_s` seconds; dropped if the kernel stops first."""
        def deliver() -> None:
            if not self._stopped:
                self.tell(target, method, *args)

        asyncio.get_running_loop().call_later(max(delay_s, 0.0), deliver)

    async def ask(self, target: ActorId, method: str, *args: Any, **kwargs: Any) -> Any:
        (result,) = await self.wait_for(self.send(target, method, *args, **kwargs))
        return result

    async def wait_for(self, *replies: Awaitable[Any]) -> list[Any]:
        """Await replies, giving the caller's shard worker slot back while waiting."""
        shard = _held_shard.get()
        if shard is not None:
            self._shards[shard].workers.release()
        try:
            gathered = asyncio.gather(*replies)
            if self.reply_timeout_s is None:
                return list(await gathered)
            return list(await asyncio.wait_for(gathered, self.reply_timeout_s))
        except asyncio.TimeoutError as e:
            raise ReplyTimeout(f"no reply within {self.reply_timeout_s}s") from e
        finally:
            if shard is not None:
                await self._shards[shard].workers.acquire()

    async def pause(self, seconds: float) -> None:
        """Sleep inside an actor turn without holding a worker slot."""
        shard = _held_shard.get()
        if shard is not None:
            self._shards[shard].workers.release()
        try:
            await asyncio.sleep(seconds)
        finally:
            if shard is not None:
                await self._shards[shard].workers.acquire()

    async def _run(self, activation: _Activation) -> None:
        loop = asyncio.get_running_loop()
        shard = self._shards[activation.shard]
        while True:
            message = await activation.queue.get()
            if message is None:
                return
            delay = message.deliver_at - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)

            await shard.workers.acquire()
            actor_token = _current_actor.set(activation.actor.id)
            shard_token = _held_shard.set(activation.shard)
            activation.busy = True
            try:
                service_ns = self.turn_cost_ns + (self.remote_cost_ns if message.remote else 0)
                if service_ns:
                    shard.busy_ns += service_ns
                    await asyncio.sleep(service_ns / 1e9)
                result = await activation.actor.receive(message)
            except Exception as e:
                if message.reply is not None and not message.reply.done():
                    message.reply.set_exception(e)
                else:
                    Actor.log.exception(
                        f"{activation.actor.id} failed handling {message.method!r}: {e}"
                    )
            else:
                if message.reply is not None and not message.reply.done():
                    message.reply.set_result(result)
            finally:
                activation.busy = False
                _held_shard.reset(shard_token)
                _current_actor.reset(actor_token)
                shard.workers.release()
                shard.turns += 1
                shard.remote_turns += message.remote
                activation.processed += 1
                self.messages_processed += 1
                self._inflight -= 1
                if self._inflight == 0:
                    self._idle.set()

    # Streams

    def _channel(self, cell: CellId) -> StreamChannel:
        channel = self._channels.get(cell)
        if channel is None:
            channel = self._channels[cell] = StreamChannel(cell)
        return channel

    def subscribe(self, cell: CellId, who: ActorId) -> bool:
        """Add `who` to the cell's channel; returns False when it already was a member."""
        channel = self._channel(cell)
        if who in channel.subscribers:
            return False
        channel.subscribers[who] = None
        return True

    def unsubscribe(self, cell: CellId, who: ActorId) -> bool:
        channel = self._channels.get(cell)
        if channel is None or who not in channel.subscribers:
            return False
        del channel.subscribers[who]
        return True

    def subscribers(self, cell: CellId) -> set[ActorId]:
        channel = self._channels.get(cell)
        return set(channel.subscribers) if channel else set()

    def publish(self, cell: CellId, update: Any) -> int:
        """Deliver `update` once to every current subscriber of the cell's channel."""
        channel = self._channels.get(cell)
        if channel is None:
            return 0
        receivers = list(channel.subscribers)
        for who in receivers:
            self.tell(who, "stream_update", update)
        return len(receivers)

    # Timers

    def register_timer(
        self,
        owner: ActorId,
        interval_ns: int,
        *,
        jitter_ns: int = 0,
        first_tick: int | None = None,
        method: str = "timer_fire",
    ) -> TimerHandle:
        """Deliver `method(tick)` to `owner` at every tick of the shared timer grid.

        Tick k fires at the nominal grid time plus a uniform jitter in [-jitter, +jitter],
        shifted by the owner's shard clock skew.
        """
        if interval_ns <= 0:
            raise ValueError(f"timer interval must be positive, got {interval_ns}")
        if first_tick is None:
            first_tick = self.clock.next_tick(interval_ns)
        handle = TimerHandle(
            owner=owner,
            interval_ns=interval_ns,
            jitter_ns=jitter_ns,
            first_tick=first_tick,
            method=method,
        )
        handle._task = asyncio.create_task(self._tick(handle), name=f"timer {owner}")
        self._timers.append(handle)
        return handle

    async def _tick(self, handle: TimerHandle) -> None:
        tick = handle.first_tick
        skew = self.clock.skew_of(self.shard_of(handle.owner))
        while not handle.cancelled and not self._stopped:
            jitter = 0
            if handle.jitter_ns:
                jitter = int(self._rng.integers(-handle.jitter_ns, handle.jitter_ns, endpoint=True))
            due = self.clock.tick_time(tick, handle.interval_ns) + jitter - skew
            wait_ns = due - self.clock.now()
            if wait_ns > 0:
                await asyncio.sleep(wait_ns / 1e9)
            if handle.cancelled or self._stopped:
                return
            handle.fire_times.append(self.clock.now())
            self.tell(handle.owner, handle.method, tick)
            tick += 1

    def cancel_timers(self) -> None:
        for handle in self._timers:
            handle.cancel()
        self._timers.clear()

    # Lifecycle

    async def quiesce(self, timeout_s: float | None = None) -> None:
        """Wait until every sent message has been processed."""
        await asyncio.wait_for(self._idle.wait(), timeout_s)

    async def stop(self) -> None:
        """Cancel timers, drain mailboxes and refuse further sends."""
        if self._stopped:
            return
        self.cancel_timers()
        self._stopped = True
        for activation in self._activations.values():
            activation.queue.put_nowait(None)
        tasks = [a.task for a in self._activations.values() if a.task is not None]
        await asyncio.gather(*tasks, return_exceptions=True)
        Actor.log.info(
            f"Kernel stopped: {len(self._activations)} actors, "
            f"{self.messages_sent} messages sent, {self.messages_processed} processed"
        )
