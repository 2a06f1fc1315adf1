"""Value domain shared by the live store, the history store, and the tooling.

Addresses, storage keys/values, and hashes are plain ``bytes`` of a fixed
width; balances, nonces, block numbers, and reincarnation counters are
``int`` with an enforced range. All fixed-width integers serialize
big-endian everywhere in this package.
"""

from __future__ import annotations

from dataclasses import dataclass

from .digest import digest
from .errors import FormatError, ValidationError

ADDRESS_SIZE = 20
KEY_SIZE = 32
VALUE_SIZE = 32
BALANCE_SIZE = 16
NONCE_SIZE = 8
BLOCK_SIZE = 8
REINC_SIZE = 4
MAX_CODE_SIZE = 25600

ZERO_VALUE = b"\x00" * VALUE_SIZE

MAX_BALANCE = (1 << (BALANCE_SIZE * 8)) - 1
MAX_NONCE = (1 << (NONCE_SIZE * 8)) - 1
MAX_BLOCK = (1 << (BLOCK_SIZE * 8)) - 1
MAX_REINC = (1 << (REINC_SIZE * 8)) - 1

Address = bytes
StorageKey = bytes
StorageValue = bytes
Hash32 = bytes


def _check_width(name: str, value: bytes, width: int) -> None:
    if not isinstance(value, (bytes, bytearray)) or len(value) != width:
        raise FormatError(f"{name} must be exactly {width} bytes, got {value!r}")


def _check_range(name: str, value: int, maximum: int) -> None:
    if not isinstance(value, int) or value < 0 or value > maximum:
        raise FormatError(f"{name} out of range: {value!r}")


@dataclass(frozen=True)
class AccountUpdate:
    """All changes one block makes to one account.

    ``balance``/``nonce``/``code`` are ``None`` when the block does not touch
    them. ``slots`` holds (key, value) pairs; writing the all-zero value
    clears a slot. An update may not set both ``created`` and ``deleted``.
    """

    address: Address
    created: bool = False
    deleted: bool = False
    balance: int | None = None
    nonce: int | None = None
    code: bytes | None = None
    slots: tuple[tuple[StorageKey, StorageValue], ...] = ()

    def __post_init__(self):
        _check_width("address", self.address, ADDRESS_SIZE)
        if self.created and self.deleted:
            raise ValidationError(f"update for {self.address.hex()} is both created and deleted")
        if self.balance is not None:
            _check_range("balance", self.balance, MAX_BALANCE)
        if self.nonce is not None:
            _check_range("nonce", self.nonce, MAX_NONCE)
        if self.code is not None and len(self.code) > MAX_CODE_SIZE:
            raise FormatError(f"code length {len(self.code)} exceeds {MAX_CODE_SIZE}")
        object.__setattr__(self, "slots", tuple((bytes(k), bytes(v)) for k, v in self.slots))
        for key, value in self.slots:
            _check_width("storage key", key, KEY_SIZE)
            _check_width("storage value", value, VALUE_SIZE)


@dataclass(frozen=True)
class BlockDiff:
    """The change set of one block: per-account updates, sorted by address."""

    block: int
    updates: tuple[AccountUpdate, ...] = ()

    def __post_init__(self):
        _check_range("block", self.block, MAX_BLOCK)
        object.__setattr__(self, "updates", tuple(self.updates))


def canonicalize_update(update: AccountUpdate) -> AccountUpdate:
    """Sort slots by key; reject duplicate keys."""
    slots = sorted(update.slots, key=lambda kv: kv[0])
    for (a, _), (b, _) in zip(slots, slots[1:]):
        if a == b:
            raise ValidationError(f"duplicate storage key {a.hex()} for {update.address.hex()}")
    if tuple(slots) == update.slots:
        return update
    return AccountUpdate(
        address=update.address,
        created=update.created,
        deleted=update.deleted,
        balance=update.balance,
        nonce=update.nonce,
        code=update.code,
        slots=tuple(slots),
    )


def canonicalize_diff(diff: BlockDiff) -> BlockDiff:
    """Sort updates by address, sort each update's slots, reject duplicates."""
    updates = sorted((canonicalize_update(u) for u in diff.updates), key=lambda u: u.address)
    for a, b in zip(updates, updates[1:]):
        if a.address == b.address:
            raise ValidationError(f"duplicate update for address {a.address.hex()} in block {diff.block}")
    return BlockDiff(block=diff.block, updates=tuple(updates))


def validate_diff(diff: BlockDiff) -> None:
    """Raise ValidationError unless ``diff`` is already canonical."""
    if canonicalize_diff(diff) != diff:
        raise ValidationError(f"block {diff.block} diff is not in canonical order")


def serialize_update(update: AccountUpdate) -> bytes:
    """Canonical, injective byte encoding used as hash input.

    Layout: address, deleted flag, created flag, then each optional field
    (balance, nonce, code) as a presence byte followed by the payload. Code
    contributes its 32-byte digest, not its body. Slots follow as a 4-byte
    big-endian count and (key, value) pairs sorted by key.
    """
    update = canonicalize_update(update)
    parts = [
        update.address,
        b"\x01" if update.deleted else b"\x00",
        b"\x01" if update.created else b"\x00",
    ]
    if update.balance is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01" + update.balance.to_bytes(BALANCE_SIZE, "big"))
    if update.nonce is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01" + update.nonce.to_bytes(NONCE_SIZE, "big"))
    if update.code is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01" + digest(update.code))
    parts.append(len(update.slots).to_bytes(4, "big"))
    for key, value in update.slots:
        parts.append(key)
        parts.append(value)
    return b"".join(parts)
