"""Coded TCP over lossy multipath links: codec, wire format, simulator and UDP transport."""

import json

from . import _core
from ._core import (
    BlockDecoder,
    EncodeError,
    NotDecodable,
    ScenarioError,
    StallError,
    UdpError,
    bind_socket,
    deserialize,
    encode,
    gf_inv,
    gf_mul,
    loss_ewma,
    make_stream,
    receive_on,
    run_scenario,
    send,
    serialize,
)

__all__ = [
    "BlockDecoder",
    "EncodeError",
    "NotDecodable",
    "ScenarioError",
    "StallError",
    "UdpError",
    "bind_socket",
    "deserialize",
    "encode",
    "gf_inv",
    "gf_mul",
    "loss_ewma",
    "make_stream",
    "receive_on",
    "run_scenario",
    "send",
    "serialize",
    "simulate",
]


def simulate(paths, stream, **kwargs):
    """Runs one simulated transfer.

    `paths` is a list of dicts with optional keys delay, bandwidth, loss,
    queue, seed, jitter and ack_loss. Returns (report, throughput_csv) with
    the report decoded from its JSON record.
    """
    record, csv = _core.simulate(paths, stream, **kwargs)
    return json.loads(record), csv
