"""Multi-application learning engine.

Each registered application owns an isolated context: schema, training
data, generated rules, generation mode, and the record of its last
inference. Mutating requests serialize per context; different keys may
proceed concurrently.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence, Union

from . import id3 as id3mod
from . import mining
from .errors import EngineError
from .model import (
    INPUT,
    OUTPUT,
    AttributeSchema,
    Dataset,
    ItemSet,
    Rule,
    Schema,
    Thresholds,
    TrainingRow,
    new_key,
    validate_row,
)

ALGORITHMS = ("apriori", "maxminer", "id3")
MODES = ("automated", "manual")


@dataclass(frozen=True)
class FeedbackPolicy:
    """How feedback nudges rule confidence; clamped to [floor, ceiling]."""

    positive_delta: float = 0.05
    negative_delta: float = 0.10
    floor: float = 0.0
    ceiling: float = 1.0

    def __post_init__(self):
        for label, delta in (("positive_delta", self.positive_delta), ("negative_delta", self.negative_delta)):
            if not (0.0 < delta < 1.0):
                raise ValueError(f"{label} must lie in (0, 1)")
        if self.floor > self.ceiling:
            raise ValueError("feedback floor above ceiling")


@dataclass(frozen=True)
class GenerationConfig:
    thresholds: Thresholds
    algorithm: str

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")

    def to_dict(self) -> dict:
        return {
            "min_support": self.thresholds.min_support,
            "min_confidence": self.thresholds.min_confidence,
            "algorithm": self.algorithm,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "GenerationConfig":
        return cls(Thresholds(obj["min_support"], obj["min_confidence"]), obj["algorithm"])


@dataclass(frozen=True)
class GcoRecord:
    """What the last get_current_output matched, for feedback."""

    inputs: ItemSet
    rule_id: str
    epoch: int
    timestamp: float

    def to_dict(self) -> dict:
        return {
            "inputs": self.inputs.as_mapping(),
            "rule": self.rule_id,
            "epoch": self.epoch,
            "t": self.timestamp,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "GcoRecord":
        return cls(ItemSet.from_mapping(obj["inputs"]), obj["rule"], obj["epoch"], obj["t"])


@dataclass(frozen=True)
class InferenceResult:
    outputs: ItemSet
    confidence: float
    rule: Rule


@dataclass(frozen=True)
class MigrationReport:
    dropped_columns: int
    quarantined_rows: int


def _match_order(rule: Rule) -> tuple:
    """Total order for picking the best matching rule (min() wins)."""
    return (-rule.confidence, -rule.support, -len(rule.antecedent), rule.identity)


class AppContext:
    """Everything the engine knows about one registered application."""

    __slots__ = (
        "key",
        "name",
        "schema",
        "dataset",
        "quarantine",
        "rules",
        "rules_generated",
        "mode",
        "config",
        "last_gco",
        "generation_epoch",
        "lock",
    )

    def __init__(self, key: str, name: str):
        self.key = key
        self.name = name
        self.schema: Optional[Schema] = None
        self.dataset: Optional[Dataset] = None
        self.quarantine: list[TrainingRow] = []
        self.rules: list[Rule] = []
        self.rules_generated = False
        self.mode = "manual"
        self.config: Optional[GenerationConfig] = None
        self.last_gco: Optional[GcoRecord] = None
        self.generation_epoch = 0
        self.lock = threading.RLock()

    def state_dict(self) -> dict:
        """Context metadata as one JSON-able object (rows/rules live in logs)."""
        inputs, outputs = self.schema.to_literals() if self.schema else (None, None)
        return {
            "key": self.key,
            "name": self.name,
            "inputs": inputs,
            "outputs": outputs,
            "mode": self.mode,
            "config": self.config.to_dict() if self.config else None,
            "rules_generated": self.rules_generated,
            "generation_epoch": self.generation_epoch,
            "last_gco": self.last_gco.to_dict() if self.last_gco else None,
        }

    @classmethod
    def from_state(
        cls,
        state: Mapping,
        rows: Iterable[TrainingRow] = (),
        quarantine: Iterable[TrainingRow] = (),
        rules: Iterable[Rule] = (),
    ) -> "AppContext":
        ctx = cls(state["key"], state["name"])
        if state.get("inputs") is not None:
            ctx.schema = Schema.from_literals(state["inputs"], state["outputs"])
            ctx.dataset = Dataset.restore(ctx.schema, rows)
        ctx.quarantine = list(quarantine)
        ctx.rules = list(rules)
        ctx.rules_generated = bool(state.get("rules_generated", False))
        ctx.mode = state.get("mode", "manual")
        if state.get("config"):
            ctx.config = GenerationConfig.from_dict(state["config"])
        if state.get("last_gco"):
            ctx.last_gco = GcoRecord.from_dict(state["last_gco"])
        ctx.generation_epoch = int(state.get("generation_epoch", 0))
        return ctx


def context_fingerprint(ctx: AppContext) -> str:
    """Canonical serialization of the full context, for exact-state comparison."""
    state = ctx.state_dict()
    state["rows"] = [r.to_dict() for r in (ctx.dataset.rows if ctx.dataset else ())]
    state["quarantine"] = [r.to_dict() for r in ctx.quarantine]
    state["rules"] = [r.to_dict() for r in ctx.rules]
    return json.dumps(state, sort_keys=True)


class Engine:
    """The request surface: registration through feedback, one context per key."""

    def __init__(self, feedback: Optional[FeedbackPolicy] = None):
        self.feedback = feedback if feedback is not None else FeedbackPolicy()
        self._contexts: dict[str, AppContext] = {}
        self._names: dict[str, str] = {}
        self._lock = threading.RLock()

    @classmethod
    def restore(cls, contexts: Iterable[AppContext], feedback: Optional[FeedbackPolicy] = None) -> "Engine":
        engine = cls(feedback)
        for ctx in contexts:
            engine._install(ctx)
        return engine

    def _install(self, ctx: AppContext) -> None:
        with self._lock:
            if ctx.key in self._contexts or ctx.name in self._names:
                raise ValueError(f"context {ctx.name!r}/{ctx.key} already installed")
            self._contexts[ctx.key] = ctx
            self._names[ctx.name] = ctx.key

    def context(self, key: str) -> AppContext:
        with self._lock:
            ctx = self._contexts.get(key) if isinstance(key, str) else None
            if ctx is None:
                raise EngineError("unknown-key", f"no application registered under {key!r}")
            return ctx

    def key_for_name(self, name: str) -> Optional[str]:
        with self._lock:
            return self._names.get(name)

    def contexts(self) -> list[AppContext]:
        with self._lock:
            return list(self._contexts.values())

    # -- requests ------------------------------------------------------

    def register_app(self, name: str) -> str:
        if not isinstance(name, str) or not name:
            raise EngineError("empty-name", "application name must be nonempty")
        with self._lock:
            if name in self._names:
                raise EngineError("duplicate-name", f"{name!r} is already registered")
            key = new_key()
            while key in self._contexts:
                key = new_key()
            self._install(AppContext(key, name))
            return key

    def set_input_output(
        self,
        key: str,
        inputs: Sequence[AttributeSchema],
        outputs: Sequence[AttributeSchema],
    ) -> None:
        ctx = self.context(key)
        with ctx.lock:
            if ctx.schema is not None:
                raise EngineError(
                    "schema-already-set", "use change_inputs_outputs to restructure"
                )
            ctx.schema = self._build_schema(inputs, outputs)
            ctx.dataset = Dataset(ctx.schema)

    @staticmethod
    def _build_schema(
        inputs: Sequence[AttributeSchema], outputs: Sequence[AttributeSchema]
    ) -> Schema:
        for attr in inputs:
            if attr.kind != INPUT:
                raise EngineError("invalid-schema", f"{attr.name!r} listed as input but declared {attr.kind}")
        for attr in outputs:
            if attr.kind != OUTPUT:
                raise EngineError("invalid-schema", f"{attr.name!r} listed as output but declared {attr.kind}")
        try:
            return Schema(tuple(inputs) + tuple(outputs))
        except ValueError as exc:
            raise EngineError("invalid-schema", str(exc)) from exc

    def _dataset(self, ctx: AppContext) -> Dataset:
        if ctx.schema is None or ctx.dataset is None:
            raise EngineError("no-schema", "set_input_output has not been called")
        return ctx.dataset

    def load_training_data(self, key: str, rows: Sequence[TrainingRow]) -> int:
        ctx = self.context(key)
        with ctx.lock:
            dataset = self._dataset(ctx)
            for index, row in enumerate(rows):
                try:
                    validate_row(ctx.schema, row)
                except EngineError as exc:
                    raise EngineError("validation-error", f"row {index}: {exc}") from exc
            for row in rows:
                dataset.append(row)
            if rows and ctx.mode == "automated":
                self._regenerate(ctx)
            return len(rows)

    def set_training_data_row(self, key: str, row: TrainingRow) -> None:
        ctx = self.context(key)
        with ctx.lock:
            dataset = self._dataset(ctx)
            try:
                validate_row(ctx.schema, row)
            except EngineError as exc:
                raise EngineError("validation-error", str(exc)) from exc
            dataset.append(row)
            if ctx.mode == "automated":
                self._regenerate(ctx)

    def generate_rules(
        self, key: str, thresholds: Thresholds, algorithm: str
    ) -> list[Rule]:
        if algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        ctx = self.context(key)
        with ctx.lock:
            self._dataset(ctx)
            self._regenerate(ctx, GenerationConfig(thresholds, algorithm))
            return list(ctx.rules)

    def _regenerate(self, ctx: AppContext, config: Optional[GenerationConfig] = None) -> None:
        dataset = self._dataset(ctx)
        config = config if config is not None else ctx.config
        assert config is not None
        if not len(dataset):
            raise EngineError("empty-training-data", "the training data set is empty")
        thresholds, algorithm = config.thresholds, config.algorithm
        stats = mining.MiningStats()
        if algorithm == "apriori":
            frequent = mining.apriori(dataset, thresholds.min_support, stats)
            rules = mining.derive_rules(
                frequent, ctx.schema, thresholds.min_confidence, stats, source="apriori"
            )
        elif algorithm == "maxminer":
            maximal = mining.max_miner(dataset, thresholds.min_support, stats)
            frequent = mining.expand_maximal(maximal, dataset, thresholds.min_support)
            rules = mining.derive_rules(
                frequent, ctx.schema, thresholds.min_confidence, stats, source="maxminer"
            )
        else:
            rules = set()
            for target in ctx.schema.output_names:
                tree = id3mod.id3_build(dataset, ctx.schema, target)
                rules |= id3mod.id3_rules(tree, dataset, thresholds, target, stats)
        ctx.config = config
        ctx.rules = sorted(rules, key=_match_order)
        ctx.rules_generated = True
        ctx.generation_epoch += 1

    def set_generation_mode(self, key: str, mode: str) -> None:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        ctx = self.context(key)
        with ctx.lock:
            if mode == "automated" and ctx.config is None:
                raise EngineError(
                    "no-generation-config", "generate_rules must run once before automated mode"
                )
            ctx.mode = mode

    def get_current_output(
        self, key: str, inputs: Union[ItemSet, Mapping[str, str]]
    ) -> Optional[InferenceResult]:
        ctx = self.context(key)
        query = inputs if isinstance(inputs, ItemSet) else ItemSet.from_mapping(inputs)
        with ctx.lock:
            if not ctx.rules_generated:
                raise EngineError("no-rules-generated", "generate_rules has never been called")
            matches = [r for r in ctx.rules if r.active and r.antecedent.issubset(query)]
            if not matches:
                ctx.last_gco = None
                return None
            best = min(matches, key=_match_order)
            ctx.last_gco = GcoRecord(query, best.identity, ctx.generation_epoch, time.time())
            return InferenceResult(best.consequent, best.confidence, best)

    def send_feedback_last_gco(self, key: str, verdict: str) -> float:
        if verdict not in ("positive", "negative"):
            raise ValueError("verdict must be 'positive' or 'negative'")
        ctx = self.context(key)
        with ctx.lock:
            record = ctx.last_gco
            if record is None:
                raise EngineError("no-pending-gco", "no unconsumed get_current_output match")
            if record.epoch != ctx.generation_epoch:
                raise EngineError("rule-evicted", "the matched rule was replaced by regeneration")
            index = next(
                (i for i, r in enumerate(ctx.rules) if r.identity == record.rule_id), None
            )
            if index is None:
                raise EngineError("rule-evicted", "the matched rule is no longer stored")
            rule = ctx.rules[index]
            if verdict == "positive":
                confidence = rule.confidence + self.feedback.positive_delta
            else:
                confidence = rule.confidence - self.feedback.negative_delta
            confidence = min(max(confidence, self.feedback.floor), self.feedback.ceiling)
            assert ctx.config is not None
            active = not (confidence < ctx.config.thresholds.min_confidence)
            ctx.rules[index] = replace(rule, confidence=confidence, active=active)
            ctx.last_gco = None
            return confidence

    def delete_training_data(self, key: str) -> None:
        ctx = self.context(key)
        with ctx.lock:
            if ctx.dataset is not None:
                ctx.dataset.clear()
            ctx.quarantine = []

    def delete_training_data_row(
        self, key: str, input_match: Mapping[str, Optional[str]], mode: str = "first"
    ) -> int:
        if mode not in ("first", "all"):
            raise ValueError("mode must be 'first' or 'all'")
        ctx = self.context(key)
        with ctx.lock:
            dataset = self._dataset(ctx)
            for attr in input_match:
                spec = ctx.schema.attribute(attr)
                if spec is None or spec.kind != INPUT:
                    raise EngineError(
                        "invalid-attribute", f"{attr!r} is not a declared input attribute"
                    )
            hits = [
                i
                for i, row in enumerate(dataset.rows)
                if all(row.inputs.get(a) == v for a, v in input_match.items())
            ]
            if not hits:
                return 0
            doomed = hits[:1] if mode == "first" else hits
            dataset.remove_at(doomed)
            return len(doomed)

    def change_inputs_outputs(
        self,
        key: str,
        new_inputs: Sequence[AttributeSchema],
        new_outputs: Sequence[AttributeSchema],
    ) -> MigrationReport:
        ctx = self.context(key)
        with ctx.lock:
            if ctx.schema is None:
                raise EngineError("no-schema", "set_input_output has not been called")
            new_schema = self._build_schema(new_inputs, new_outputs)
            old_attrs = {a.name: a for a in ctx.schema.attributes}
            new_attrs = {a.name: a for a in new_schema.attributes}
            # a column is dropped when it disappears or changes kind
            dropped = {
                name
                for name, attr in old_attrs.items()
                if name not in new_attrs or new_attrs[name].kind != attr.kind
            }
            retained: list[TrainingRow] = []
            quarantined: list[TrainingRow] = []
            for row in ctx.dataset.rows:
                inputs = {a: v for a, v in row.inputs.items() if a not in dropped}
                outputs = {a: v for a, v in row.outputs.items() if a not in dropped}
                migrated = TrainingRow(inputs, outputs, row.weight)
                try:
                    validate_row(new_schema, migrated)
                except EngineError:
                    quarantined.append(migrated)
                else:
                    retained.append(migrated)
            ctx.schema = new_schema
            ctx.dataset = Dataset.restore(new_schema, retained)
            ctx.quarantine.extend(quarantined)
            ctx.rules = []
            ctx.rules_generated = False
            ctx.generation_epoch += 1
            return MigrationReport(len(dropped), len(quarantined))
