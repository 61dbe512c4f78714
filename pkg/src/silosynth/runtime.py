"""Party runtime: transports, communication accounting, and session setup.

Each of the three parties runs the same straight-line protocol program.
Sends are non-blocking, receives block; a "round" is counted whenever a
party blocks on a receive after having sent since the previous round.
Protocol outputs are a function of (inputs, seeds) only — the in-process
and TCP transports are interchangeable.
"""

from __future__ import annotations

import hashlib
import queue
import socket
import struct
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .fixedpoint import FixedPointConfig, to_u64
from .rng import SeedStreams, zero_share_seeds
from .sharing import ShareVector

# Protocol catalog; ids go on the wire, names into ledgers and reports.
PROTOCOL_LABELS = [
    "setup", "ingest", "concat", "sort", "bin", "bin_test", "inv_bin",
    "noisy_marg", "sdg", "lr", "acc", "wle", "eval", "avg", "vote",
    "h_select", "publish", "adhoc",
]
LABEL_IDS = {name: i for i, name in enumerate(PROTOCOL_LABELS)}
ID_LABELS = {i: name for name, i in LABEL_IDS.items()}

WORD = 8  # payload bytes per ring element


class ProtocolAbort(RuntimeError):
    """A protocol failed mid-run; carries the party's ledger snapshot."""

    def __init__(self, message, ledger_snapshot=None):
        super().__init__(message)
        self.ledger_snapshot = ledger_snapshot or {}


class SetupError(RuntimeError):
    pass


class AccountingError(RuntimeError):
    pass


@dataclass
class LedgerEntry:
    bytes_sent: int = 0
    messages_sent: int = 0
    rounds: int = 0
    seconds: float = 0.0


class CommLedger:
    """Per-protocol-label accounting of one party's outgoing traffic."""

    def __init__(self):
        self.entries: dict[str, LedgerEntry] = {}

    def entry(self, label: str) -> LedgerEntry:
        if label not in self.entries:
            self.entries[label] = LedgerEntry()
        return self.entries[label]

    def record_send(self, label: str, n_words: int):
        e = self.entry(label)
        e.bytes_sent += n_words * WORD
        e.messages_sent += 1

    def record_round(self, label: str):
        self.entry(label).rounds += 1

    def add_time(self, label: str, dt: float):
        self.entry(label).seconds += dt

    def snapshot(self) -> dict:
        return {
            k: {"bytes_sent": e.bytes_sent, "messages_sent": e.messages_sent,
                "rounds": e.rounds, "seconds": round(e.seconds, 6)}
            for k, e in sorted(self.entries.items())
        }

    def totals(self) -> LedgerEntry:
        t = LedgerEntry()
        for e in self.entries.values():
            t.bytes_sent += e.bytes_sent
            t.messages_sent += e.messages_sent
            t.rounds += e.rounds
            t.seconds += e.seconds
        return t

    def reset(self):
        self.entries.clear()


class LocalRouter:
    """In-process mesh of FIFO queues for one run of three parties."""

    def __init__(self, timeout: float = 300.0):
        self.queues = {(s, d): queue.SimpleQueue() for s in (1, 2, 3) for d in (1, 2, 3) if s != d}
        self.timeout = timeout

    def transport_for(self, pid: int) -> "LocalTransport":
        return LocalTransport(pid, self)


class LocalTransport:
    def __init__(self, pid: int, router: LocalRouter):
        self.pid = pid
        self.router = router
        self._send_seq = {p: 0 for p in (1, 2, 3) if p != pid}
        self._recv_seq = {p: 0 for p in (1, 2, 3) if p != pid}

    def send(self, dst: int, label_id: int, words: np.ndarray):
        seq = self._send_seq[dst]
        self._send_seq[dst] += 1
        self.router.queues[(self.pid, dst)].put((label_id, seq, words))

    def recv(self, src: int) -> np.ndarray:
        try:
            item = self.router.queues[(src, self.pid)].get(timeout=self.router.timeout)
        except queue.Empty:
            raise ProtocolAbort(f"party {self.pid}: receive from {src} timed out")
        if item is None:
            raise ProtocolAbort(f"party {self.pid}: peer {src} aborted")
        label_id, seq, words = item
        if seq != self._recv_seq[src]:
            raise ProtocolAbort(f"party {self.pid}: out-of-order frame from {src}")
        self._recv_seq[src] += 1
        return words

    def close(self):
        pass


# TCP wire format: 4-byte big-endian frame length (bytes after the length
# field), 2-byte protocol-label id, 8-byte sequence number, payload of
# 64-bit little-endian ring words.
_FRAME_HEADER = struct.Struct(">IHQ")


def write_frame(sock: socket.socket, label_id: int, seq: int, words: np.ndarray):
    payload = np.ascontiguousarray(to_u64(words).ravel()).astype("<u8").tobytes()
    sock.sendall(_FRAME_HEADER.pack(2 + 8 + len(payload), label_id, seq) + payload)


def read_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ProtocolAbort("peer closed connection")
        buf += chunk
    return buf


def read_frame(sock: socket.socket):
    (length,) = struct.unpack(">I", read_exact(sock, 4))
    body = read_exact(sock, length)
    label_id, seq = struct.unpack(">HQ", body[:10])
    words = np.frombuffer(body[10:], dtype="<u8").astype(np.uint64)
    return label_id, seq, words


class TcpTransport:
    """One party's mesh endpoint: a socket per peer plus reader threads."""

    def __init__(self, pid: int, peer_sockets: dict[int, socket.socket], timeout: float = 300.0):
        self.pid = pid
        self.sockets = peer_sockets
        self.timeout = timeout
        self._send_seq = {p: 0 for p in peer_sockets}
        self._recv_seq = {p: 0 for p in peer_sockets}
        self._queues = {p: queue.Queue() for p in peer_sockets}
        self._send_locks = {p: threading.Lock() for p in peer_sockets}
        self._readers = []
        for p, s in peer_sockets.items():
            t = threading.Thread(target=self._reader, args=(p, s), daemon=True)
            t.start()
            self._readers.append(t)

    def _reader(self, src: int, sock: socket.socket):
        try:
            while True:
                self._queues[src].put(read_frame(sock))
        except (ProtocolAbort, OSError):
            self._queues[src].put(None)

    def send(self, dst: int, label_id: int, words: np.ndarray):
        seq = self._send_seq[dst]
        self._send_seq[dst] += 1
        with self._send_locks[dst]:
            write_frame(self.sockets[dst], label_id, seq, words)

    def recv(self, src: int) -> np.ndarray:
        try:
            item = self._queues[src].get(timeout=self.timeout)
        except queue.Empty:
            raise ProtocolAbort(f"party {self.pid}: receive from {src} timed out")
        if item is None:
            raise ProtocolAbort(f"party {self.pid}: channel from {src} broke")
        label_id, seq, words = item
        if seq != self._recv_seq[src]:
            raise ProtocolAbort(f"party {self.pid}: out-of-order frame from {src}")
        self._recv_seq[src] += 1
        return words

    def close(self):
        for s in self.sockets.values():
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()


class Party:
    """One party's protocol execution context."""

    def __init__(self, pid: int, transport, master_seed: int, fp: FixedPointConfig):
        if pid not in (1, 2, 3):
            raise ValueError("party id must be 1, 2 or 3")
        self.pid = pid
        self.transport = transport
        self.fp = fp
        self.ledger = CommLedger()
        seeds = zero_share_seeds(master_seed)
        # Party i holds pairwise seeds (k_i, k_{i+1}); index by component slot.
        self.streams_a = SeedStreams(seeds[pid - 1])
        self.streams_b = SeedStreams(seeds[pid % 3])
        self.opening_log: list[tuple[str, int]] = []
        self.reveal_log: list[tuple[str, int]] = []
        self._label_stack: list[str] = []
        self._sent_since_round = False
        self._test_uniform_override: float | None = None  # test hook only

    @property
    def next_pid(self) -> int:
        return self.pid % 3 + 1

    @property
    def prev_pid(self) -> int:
        return (self.pid - 2) % 3 + 1

    # -- label scoping -----------------------------------------------------

    @property
    def current_label(self) -> str:
        return self._label_stack[-1] if self._label_stack else "adhoc"

    @contextmanager
    def protocol(self, label: str):
        if label in self._label_stack:
            raise AccountingError(f"nested identical protocol label {label!r}")
        self._label_stack.append(label)
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.ledger.add_time(label, time.perf_counter() - t0)
            self._label_stack.pop()

    # -- transport ---------------------------------------------------------

    def send_words(self, dst: int, words: np.ndarray):
        label = self.current_label
        self.ledger.record_send(label, int(np.asarray(words).size))
        self.transport.send(dst, LABEL_IDS.get(label, LABEL_IDS["adhoc"]), words)
        self._sent_since_round = True

    def recv_words(self, src: int) -> np.ndarray:
        if self._sent_since_round:
            self.ledger.record_round(self.current_label)
            self._sent_since_round = False
        try:
            return self.transport.recv(src)
        except ProtocolAbort as exc:
            raise ProtocolAbort(str(exc), self.ledger.snapshot()) from None

    # -- correlated randomness ----------------------------------------------

    def zero_add(self, shape) -> np.ndarray:
        """Fresh additive sharing of zero: this party's summand."""
        n = int(np.prod(shape))
        u = self.streams_a.words("zero-add", n) - self.streams_b.words("zero-add", n)
        return u.reshape(shape)

    def zero_xor(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        u = self.streams_a.words("zero-xor", n) ^ self.streams_b.words("zero-xor", n)
        return u.reshape(shape)

    def shared_random_words(self, shape) -> ShareVector:
        """XOR-replicated sharing of jointly random words, no communication."""
        n = int(np.prod(shape))
        a = self.streams_a.words("shared-bits", n).reshape(shape)
        b = self.streams_b.words("shared-bits", n).reshape(shape)
        return ShareVector(a, b)

    # -- local share algebra needing the party id ---------------------------

    def const_share(self, values) -> ShareVector:
        """Deterministic replicated sharing of a public constant."""
        v = to_u64(values)
        zero = np.zeros(v.shape, dtype=np.uint64)
        if self.pid == 1:
            return ShareVector(v.copy(), zero)
        if self.pid == 3:
            return ShareVector(zero, v.copy())
        return ShareVector(zero, zero.copy())

    def add_public(self, x: ShareVector, c) -> ShareVector:
        c = to_u64(c)
        if self.pid == 1:
            return ShareVector(x.a + c, x.b)
        if self.pid == 3:
            return ShareVector(x.a, x.b + c)
        return ShareVector(x.a.copy(), x.b.copy())

    def component_share(self, values: np.ndarray, slot: int) -> ShareVector:
        """Sharing whose component #slot equals ``values`` and the rest are 0.

        Valid only when ``values`` is already known to both holders of the
        slot (parties slot and slot-1); used for share splitting.
        """
        v = to_u64(values)
        zero = np.zeros(v.shape, dtype=np.uint64)
        if self.pid == slot:
            return ShareVector(v, zero)
        if self.pid == (slot - 2) % 3 + 1:  # previous party holds it as b
            return ShareVector(zero, v)
        return ShareVector(zero, zero.copy())

    # -- openings ------------------------------------------------------------

    def open(self, x: ShareVector, reason: str) -> np.ndarray:
        """Public opening to all parties; audited via the opening log."""
        self.send_words(self.next_pid, x.a)
        missing = self.recv_words(self.prev_pid).reshape(x.shape)
        self.opening_log.append((reason, int(x.size)))
        return x.a + x.b + missing

    def reveal_to(self, x: ShareVector, receiver: int, reason: str) -> np.ndarray | None:
        """Directed reveal to one party only (logged separately from opens)."""
        self.reveal_log.append((reason, int(x.size)))
        if self.pid == receiver % 3 + 1:
            self.send_words(receiver, x.b)
            return None
        if self.pid == receiver:
            missing = self.recv_words(self.next_pid).reshape(x.shape)
            return x.a + x.b + missing
        return None

    def input_values(self, values: np.ndarray | None, owner: int, shape) -> ShareVector:
        """Share values known only to ``owner`` (2 ring elements sent per value).

        Components x_owner and x_{owner+1} come from the pairwise streams the
        owner already holds; the owner computes and distributes the third.
        """
        n = int(np.prod(shape))
        slot_a, slot_b = owner, owner % 3 + 1
        slot_c = (owner + 1) % 3 + 1
        mine = {self.pid: None, self.next_pid: None}
        for slot, streams in ((self.pid, self.streams_a), (self.next_pid, self.streams_b)):
            if slot in (slot_a, slot_b):
                mine[slot] = streams.words("input-mask", n).reshape(shape)
        if self.pid == owner:
            x3 = to_u64(values) - mine[slot_a] - mine[slot_b]
            self.send_words(self.next_pid, x3)
            self.send_words(self.prev_pid, x3)
            return ShareVector(mine[slot_a], mine[slot_b])
        if self.pid == slot_b:  # holds (x_{owner+1}, x_{owner+2})
            x3 = self.recv_words(owner).reshape(shape)
            return ShareVector(mine[self.pid], x3)
        # pid == slot_c: holds (x_{owner+2}, x_owner)
        x3 = self.recv_words(owner).reshape(shape)
        return ShareVector(x3, mine[self.next_pid])


def config_fingerprint(text: str) -> np.ndarray:
    digest = hashlib.sha256(text.encode()).digest()[:16]
    return np.frombuffer(digest, dtype="<u8").astype(np.uint64)


def setup_handshake(party: Party, fingerprint: np.ndarray):
    """Cross-check config hashes and precision, then zero the ledger."""
    with party.protocol("setup"):
        probe = np.concatenate([fingerprint, np.array([party.fp.frac_bits], dtype=np.uint64)])
        party.send_words(party.next_pid, probe)
        party.send_words(party.prev_pid, probe)
        for src in (party.prev_pid, party.next_pid):
            theirs = party.recv_words(src)
            if not np.array_equal(theirs[:-1], fingerprint):
                raise SetupError(f"config hash mismatch with party {src}")
            if int(theirs[-1]) != party.fp.frac_bits:
                raise SetupError(f"frac_bits mismatch with party {src}")
    party.ledger.reset()


def run_parties(body, master_seed: int, fp: FixedPointConfig, timeout: float = 600.0):
    """Run the same protocol body on three in-process parties.

    ``body(party)`` returns that party's result; returns the list of results
    indexed by party. Any party's exception aborts the run.
    """
    router = LocalRouter(timeout=timeout)
    parties = [Party(pid, router.transport_for(pid), master_seed, fp) for pid in (1, 2, 3)]
    results: list = [None, None, None]
    errors: list = [None, None, None]

    def runner(i: int):
        try:
            results[i] = body(parties[i])
        except BaseException as exc:  # propagate to the caller thread
            errors[i] = exc
            for q in router.queues.values():
                q.put(None)  # unblock peers waiting on this party

    threads = [threading.Thread(target=runner, args=(i,)) for i in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=timeout)
    for exc in errors:
        if exc is not None:
            if isinstance(exc, ProtocolAbort):
                raise exc
            raise ProtocolAbort(f"party failed: {exc!r}", parties[0].ledger.snapshot()) from exc
    for t in threads:
        if t.is_alive():
            raise ProtocolAbort("party deadlocked or timed out", parties[0].ledger.snapshot())
    return results, parties
