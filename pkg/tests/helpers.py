"""Shared generators and fixtures used by unit and acceptance tests."""

import random

from arlearn.model import AttributeSchema, Dataset, Schema, TrainingRow


def random_schema(rng: random.Random) -> Schema:
    """A small schema whose total item universe stays within the oracle bound."""
    n_inputs = rng.randint(2, 4)
    n_outputs = rng.randint(1, 2)
    budget = 12 - 2 * (n_inputs + n_outputs)
    attrs = []
    for index in range(n_inputs + n_outputs):
        extra = rng.randint(0, 1) if budget > 0 else 0
        budget -= extra
        domain = tuple(f"v{j}" for j in range(2 + extra))
        kind = "input" if index < n_inputs else "output"
        name = f"i{index}" if kind == "input" else f"o{index - n_inputs}"
        attrs.append(AttributeSchema(name, kind, domain))
    return Schema(attrs)


def random_dataset(rng: random.Random, max_rows: int = 200) -> Dataset:
    schema = random_schema(rng)
    inputs = [schema.attribute(n) for n in schema.input_names]
    outputs = [schema.attribute(n) for n in schema.output_names]
    rows = []
    for _ in range(rng.randint(1, max_rows)):
        bound = {
            a.name: rng.choice(a.domain) for a in inputs if rng.random() < 0.85
        }
        labels = {a.name: rng.choice(a.domain) for a in outputs}
        rows.append(TrainingRow(bound, labels, rng.randint(1, 3)))
    return Dataset(schema, rows)


def planted_long_pattern(rng: random.Random) -> Dataset:
    """Twenty rows, ninety percent sharing one 8-item pattern over 10 attributes."""
    schema = Schema(
        [AttributeSchema(f"in{i}", "input", ("0", "1")) for i in range(1, 10)]
        + [AttributeSchema("out", "output", ("0", "1"))]
    )
    rows = []
    for _ in range(18):
        inputs = {f"in{k}": "1" for k in range(1, 8)}
        inputs["in8"] = rng.choice(["0", "1"])
        inputs["in9"] = rng.choice(["0", "1"])
        rows.append(TrainingRow(inputs, {"out": "1"}))
    for _ in range(2):
        rows.append(TrainingRow({f"in{k}": "0" for k in range(1, 10)}, {"out": "0"}))
    return Dataset(schema, rows)


F1_INPUT_LITERALS = ["headphones:input:{yes,no}", "hour:input:{morning,evening}"]
F1_OUTPUT_LITERALS = ["app:output:{music,none}"]

F1_ROW_DICTS = [
    {"inputs": {"headphones": "yes", "hour": "morning"}, "outputs": {"app": "music"}},
    {"inputs": {"headphones": "yes", "hour": "morning"}, "outputs": {"app": "music"}},
    {"inputs": {"headphones": "no", "hour": "morning"}, "outputs": {"app": "none"}},
    {"inputs": {"headphones": "yes", "hour": "evening"}, "outputs": {"app": "music"}},
    {"inputs": {"headphones": "no", "hour": "evening"}, "outputs": {"app": "none"}},
]

TRACE_SPEC = {
    "signals": [
        {
            "signal": "clock",
            "attribute": "hour",
            "kind": "timeofday",
            "labels": ["08", "19"],
            "weights": [0.5, 0.5],
        },
        {
            "signal": "headphones",
            "attribute": "headphones",
            "kind": "categorical",
            "domain": ["yes", "no"],
            "weights": [0.5, 0.5],
        },
    ],
    "action": {"name": "app_launched", "background": "none"},
    "patterns": [
        {"when": {"headphones": "yes", "hour": "08"}, "value": "music", "probability": 0.9}
    ],
    "churn": 0.5,
    "action_rate": 0.6,
}

BINNING_DICT = {
    "signals": [
        {"signal": "clock", "attribute": "hour", "kind": "timeofday"},
        {
            "signal": "headphones",
            "attribute": "headphones",
            "kind": "categorical",
            "domain": ["yes", "no"],
        },
    ],
    "actions": [{"attribute": "app_launched", "domain": ["music", "none"]}],
}
