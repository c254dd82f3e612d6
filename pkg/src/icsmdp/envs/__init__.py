"""Concrete IC-SMDP environments."""

from .cpu import CpuEnv, CpuSpec, build_cpu
from .routing import RoutingEnv, RoutingSpec, build_routing, greedy_route
from .synthetic import SyntheticEnv, SyntheticSpec, build_synthetic

__all__ = ["CpuEnv", "CpuSpec", "build_cpu", "RoutingEnv", "RoutingSpec", "build_routing",
           "greedy_route", "SyntheticEnv", "SyntheticSpec", "build_synthetic"]
