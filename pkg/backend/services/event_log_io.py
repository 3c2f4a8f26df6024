"""
Binary and JSON persistence of event logs

Binary layout (little endian):
  header  magic b"EBCL", version u32, n u32, alpha f64, seed u64,
          t_lo f64, t_hi f64, event count u64
  record  length u32 (bytes that follow), time f64, k u32, parent u32,
          k x participant u32
"""

import json
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from errors import LogCorruptedError, LogFormatError
from services.evolving import EventLog
from utils.file_ops import file_ops

logger = logging.getLogger(__name__)

MAGIC = b"EBCL"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIIdQddQ")
RECORD_HEAD = struct.Struct("<IdII")
JSON_EVENT_LIMIT = 100_000


def encode_binary(log: EventLog) -> bytes:
    times, offsets, labels, parents = log.arrays()
    t_lo, t_hi = log.window
    chunks = [HEADER.pack(MAGIC, FORMAT_VERSION, log.n, log.alpha, log.seed, t_lo, t_hi, len(times))]
    for i in range(len(times)):
        participants = labels[offsets[i]:offsets[i + 1]].astype('<u4')
        k = len(participants)
        chunks.append(RECORD_HEAD.pack(8 + 4 + 4 + 4 * k, float(times[i]), k, int(parents[i])))
        chunks.append(participants.tobytes())
    return b"".join(chunks)


def decode_binary(data: bytes) -> EventLog:
    """
    Rebuild a frozen EventLog from its binary form

    Raises:
        LogFormatError: wrong magic or unsupported version
        LogCorruptedError: truncated stream or inconsistent records
    """
    if len(data) < 4 or data[:4] != MAGIC:
        raise LogFormatError("not an event log (bad magic)")
    if len(data) < HEADER.size:
        raise LogCorruptedError("truncated header")
    magic, version, n, alpha, seed, t_lo, t_hi, count = HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise LogFormatError(f"unsupported event log version {version} (expected {FORMAT_VERSION})")

    pos = HEADER.size
    times = np.empty(count)
    parents = np.empty(count, dtype=np.int64)
    sizes = np.empty(count, dtype=np.int64)
    labels = []
    for i in range(count):
        if pos + RECORD_HEAD.size > len(data):
            raise LogCorruptedError(f"stream ends inside record {i} of {count}")
        length, time, k, parent = RECORD_HEAD.unpack_from(data, pos)
        if length != 16 + 4 * k:
            raise LogCorruptedError(f"record {i} declares {length} bytes for k={k}")
        start = pos + RECORD_HEAD.size
        stop = start + 4 * k
        if stop > len(data):
            raise LogCorruptedError(f"stream ends inside record {i} of {count}")
        participants = np.frombuffer(data, dtype='<u4', count=k, offset=start).astype(np.int64)
        if k < 2 or parent not in participants or np.any(participants < 1) or np.any(participants > n):
            raise LogCorruptedError(f"record {i} has an invalid participant set")
        times[i] = time
        parents[i] = parent
        sizes[i] = k
        labels.append(participants)
        pos = stop
    if pos != len(data):
        raise LogCorruptedError(f"{len(data) - pos} trailing bytes after {count} records")

    offsets = np.concatenate([[0], np.cumsum(sizes)])
    flat = np.concatenate(labels) if labels else np.empty(0, dtype=np.int64)
    return EventLog.from_arrays(n, alpha, seed, (t_lo, t_hi), times, offsets, flat, parents)


def log_to_dict(log: EventLog) -> dict:
    times, offsets, labels, parents = log.arrays()
    if len(times) > JSON_EVENT_LIMIT:
        logger.warning("JSON mirror of %d events is large; prefer the binary format", len(times))
    return {
        'magic': MAGIC.decode(),
        'version': FORMAT_VERSION,
        'n': log.n,
        'alpha': log.alpha,
        'seed': log.seed,
        'window': list(log.window),
        'events': [
            {
                'time': float(times[i]),
                'participants': [int(v) for v in labels[offsets[i]:offsets[i + 1]]],
                'parent': int(parents[i]),
            }
            for i in range(len(times))
        ],
    }


def log_from_dict(payload: dict) -> EventLog:
    if payload.get('magic') != MAGIC.decode():
        raise LogFormatError("not an event log (bad magic)")
    if payload.get('version') != FORMAT_VERSION:
        raise LogFormatError(f"unsupported event log version {payload.get('version')}")
    try:
        events = payload['events']
        times = np.asarray([e['time'] for e in events], dtype=np.float64)
        sizes = np.asarray([len(e['participants']) for e in events], dtype=np.int64)
        flat = np.asarray([p for e in events for p in e['participants']], dtype=np.int64)
        parents = np.asarray([e['parent'] for e in events], dtype=np.int64)
        window = payload['window']
        n, alpha, seed = payload['n'], payload['alpha'], payload['seed']
    except (KeyError, TypeError) as exc:
        raise LogCorruptedError(f"malformed event log JSON: {exc}") from exc
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    return EventLog.from_arrays(n, alpha, seed, window, times, offsets, flat, parents)


def write_event_log(log: EventLog, path: Union[str, Path]) -> str:
    """Write the binary log (and a .json mirror when small); returns the binary file's sha256"""
    path = Path(path)
    data = encode_binary(log)
    if not file_ops.atomic_write_bytes(path, data):
        raise OSError(f"could not write event log to {path}")
    if len(log) <= JSON_EVENT_LIMIT:
        file_ops.write_json(path.with_suffix('.json'), log_to_dict(log))
    logger.info("wrote event log %s (%d events, window [%.6g, %.6g])", path, len(log), *log.window)
    return file_ops.get_file_hash(path)


def read_event_log(path: Union[str, Path]) -> EventLog:
    path = Path(path)
    if path.suffix == '.json':
        return log_from_dict(json.loads(path.read_text(encoding='utf-8')))
    return decode_binary(path.read_bytes())
