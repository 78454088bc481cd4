"""A small asynchronous actor language with behavioural types.

Programs are sequences of actor definitions; actors exchange asynchronous
messages through mailboxes and may spawn further actors, passing names
around.  The package parses such programs, executes them (including
exhaustive exploration of all interleavings), checks them against
behavioural types with linear input markings, and cross-validates the
static verdicts against execution.
"""

from .names import Ident, Span
from .parser import MarkingSyntaxError, ParseError, parse_file, parse_program, parse_type
from .printer import pretty_print
from .terms import (
    Config,
    Program,
    Report,
    WellFormednessError,
    actors_of,
    alpha_rename,
    free_names,
    substitute,
    well_formed,
)
from .types import (
    BType,
    balanced,
    env_compose,
    env_merge,
    fully_marked,
    inputs_of,
    merge_mark,
    merge_mark_t,
    no_mark,
    strip_marks,
    subset_plus,
    suffix_le,
    suffix_merge,
)
from .checker import (
    CheckError,
    CheckResult,
    CycleReport,
    after_m_suffix,
    check_config,
    check_expr,
    check_mailbox,
    check_program,
    infer_refined_annotations,
)
from .semantics import (
    LimitExceeded,
    StateGraph,
    Trace,
    canonicalize,
    explore,
    graph_to_dot,
    graph_to_json,
    run_random,
    step,
)
from .verifier import (
    HarnessReport,
    Verdict,
    mailbox_lemma_harness,
    subject_reduction_harness,
    verify_safety,
)

__version__ = "0.1.0"
