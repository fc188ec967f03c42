"""Helpers shared by the test modules."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

from dirplan.directory import Directory
from dirplan.fixtures import DP_DN, ORG_SUFFIX, sample_directory, utc
from dirplan.lifecycle import PublicationEngine

GOLDEN = Path(__file__).parent / "golden"


class FakeClock:
    """Settable clock; every call returns the current setting."""

    def __init__(self, now: datetime):
        self.now = now

    def __call__(self) -> datetime:
        return self.now

    def set(self, *args: int) -> None:
        self.now = utc(*args)


class FaultSwitch:
    """Directory fault hook that fails writes while ``on`` (or by predicate)."""

    def __init__(self):
        self.on = False
        self.hits = 0

    def __call__(self, kind, dn):
        from dirplan.directory import OpKind
        from dirplan.errors import DirectoryUnavailable

        if self.on and kind is not OpKind.SEARCH:
            self.hits += 1
            raise DirectoryUnavailable(f"injected fault on {kind.value} {dn}")


@dataclass
class World:
    clock: FakeClock
    directory: Directory
    engine: PublicationEngine
    faults: FaultSwitch
    notifications: list

    dp = DP_DN


def make_world(accredited: bool = False, users=("Alice",), now=None) -> World:
    clock = FakeClock(now or utc(2004, 3, 16))
    directory = sample_directory(clock, users=users)
    faults = FaultSwitch()
    directory.fault_hook = faults
    notes: list = []
    engine = PublicationEngine(directory, clock=clock, owner_base=ORG_SUFFIX, accredited=accredited,
                               notifier=notes.append)
    return World(clock, directory, engine, faults, notes)


# -- randomized engine runs ----------------------------------------------------------

class RandomFaults:
    """Fault hook failing each directory write with probability ``rate``."""

    def __init__(self, rng, rate: float):
        self.rng = rng
        self.rate = rate
        self.hits = 0

    def __call__(self, kind, dn):
        from dirplan.directory import OpKind
        from dirplan.errors import DirectoryUnavailable

        if kind is not OpKind.SEARCH and self.rng.random() < self.rate:
            self.hits += 1
            raise DirectoryUnavailable(f"injected fault on {kind.value} {dn}")


_CERT_POOL: dict[int, bytes] = {}
RANDOM_USERS = ("Alice", "Bob")


def pool_certificate(serial: int) -> bytes:
    from dirplan.fixtures import CA_DN, build_certificate

    if serial not in _CERT_POOL:
        user = RANDOM_USERS[serial % len(RANDOM_USERS)]
        _CERT_POOL[serial] = build_certificate(
            serial, CA_DN, f"CN={user},O=Org,C=DE", utc(2004, 1, 1), utc(2005, 3, 15, 12),
            key_usage=("digitalSignature",), is_ca=False,
        )
    return _CERT_POOL[serial]


@dataclass
class RunTrace:
    world: World
    steps: list
    retried_ok: int = 0
    expected_errors: int = 0


def random_engine_run(seed: int, steps: int = 25, fault_rate: float = 0.1, on_step=None) -> RunTrace:
    """Drive register/activate/publish_crl/retry at random against the sample tree.

    Lifecycle errors the rules call for (stale or base-less CRLs, double
    activation) are expected and counted; anything else propagates.
    ``on_step(world)`` runs after every call for invariant checks.
    """
    import random

    from dirplan.errors import AlreadyActivated, DuplicateRegistration, MissingBaseCrl, NoSuchRecord, StaleCrl
    from dirplan.fixtures import CA_DN, build_crl

    rng = random.Random(seed)
    world = make_world(users=RANDOM_USERS)
    world.directory.fault_hook = RandomFaults(rng, fault_rate)
    trace = RunTrace(world, [])
    crl_number = 0
    completes: list[int] = []
    for _ in range(steps):
        action = rng.choice(["register", "register", "activate", "activate", "crl", "delta", "stale", "retry"])
        serial = rng.randint(1, 12)
        try:
            if action == "register":
                world.engine.register_certificate(pool_certificate(serial), consent_to_publish=rng.random() < 0.7)
            elif action == "activate":
                world.engine.activate(CA_DN, serial)
            elif action in ("crl", "delta"):
                crl_number += 1
                revoked = [(s, utc(2004, 6, 1)) for s in rng.sample(range(1, 13), rng.randint(0, 3))]
                when = utc(2004, 4, 1) + timedelta(days=crl_number)
                if action == "crl" or not completes:
                    completes.append(crl_number)
                    der = build_crl(CA_DN, when, revoked=revoked, crl_number=crl_number)
                else:
                    base = rng.choice(completes)
                    der = build_crl(CA_DN, when, revoked=revoked, crl_number=crl_number, base_crl_number=base)
                world.engine.publish_crl(der, world.dp)
            elif action == "stale":
                when = utc(2004, 4, 1) + timedelta(days=rng.randint(0, max(crl_number, 1)))
                world.engine.publish_crl(build_crl(CA_DN, when, crl_number=0), world.dp)
            else:
                trace.retried_ok += sum(r.outcome != "failed" for r in world.engine.retry_out_of_band())
        except (StaleCrl, MissingBaseCrl, AlreadyActivated, DuplicateRegistration, NoSuchRecord):
            trace.expected_errors += 1
        trace.steps.append((action, serial))
        if on_step is not None:
            on_step(world)
    return trace


# -- acceptance bookkeeping ----------------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


def criterion(number: int, title: str):
    """Record a PASS/FAIL line for acceptance criterion ``number``."""
    import functools

    def wrap(test):
        @functools.wraps(test)
        def run(*args, **kwargs):
            try:
                test(*args, **kwargs)
            except BaseException as exc:
                ACCEPTANCE_RESULTS[number] = (title, False, f"{type(exc).__name__}: {exc}".splitlines()[0])
                raise
            ACCEPTANCE_RESULTS[number] = (title, True, "")

        return run

    return wrap
