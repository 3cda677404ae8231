import glob
import os

import pytest

from replaycache.config import SimConfig
from replaycache.pipeline import CompileOptions, compile_program

CORPUS_DIR = os.path.join(os.path.dirname(__file__), "corpus")


def corpus_paths():
    return sorted(glob.glob(os.path.join(CORPUS_DIR, "*.rasm")))


def corpus_names():
    return [os.path.basename(p) for p in corpus_paths()]


@pytest.fixture(scope="session")
def corpus_sources():
    return {os.path.basename(p): open(p).read() for p in corpus_paths()}


@pytest.fixture(scope="session")
def compiled_corpus(corpus_sources):
    """Every corpus program compiled at default options, per checkpoint variant."""
    out = {}
    for name, src in corpus_sources.items():
        for variant in ("nvp", "quickrecall"):
            out[(name, variant)] = compile_program(src, CompileOptions(variant=variant))
    return out


@pytest.fixture(scope="session")
def sim_config():
    return SimConfig()


FIG5 = """
fn main {
b_a:
  li v1, 10
  li v2, 20
  bne v1, v2, b_c
b_b:
  st v2 -> [r13-8]
  jmp b_d
b_c:
  st v1 -> [r13-16]
  jmp b_d
b_d:
  li v3, 1
  st v3 -> [r13-24]
  halt
}
"""


@pytest.fixture(scope="session")
def fig5_source():
    return FIG5
