"""Weakly-hard (m,k)-firm guarantees for time-triggered TSN schedules:
token-bucket bounds on elevated traffic, schedule augmentation with
prolonged gate windows and PSFP elevation, and a discrete-event simulator."""

from .augment_multihop import augment_multihop, verify_latency
from .augment_port import augment_port
from .core import (Link, MuPattern, NetworkGraph, Schedule, ScheduleError, SporadicStream, Stream,
                   format_duration, parse_duration)
from .tgraph import build_graph, critical_path_cost
from .token_bucket import TokenBucket, bucket_size, link_buckets, token_rate
from .weakly_hard import MkRequirement, check_mk, mu_satisfies

__all__ = ["Link", "MkRequirement", "MuPattern", "NetworkGraph", "Schedule", "ScheduleError",
           "SporadicStream", "Stream", "TokenBucket", "augment_multihop", "augment_port",
           "bucket_size", "build_graph", "check_mk", "critical_path_cost", "format_duration",
           "link_buckets", "mu_satisfies", "parse_duration", "token_rate", "verify_latency"]
