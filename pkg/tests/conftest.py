import pytest

from arlearn.model import AttributeSchema, Dataset, Schema, TrainingRow


@pytest.fixture
def f1_schema() -> Schema:
    return Schema(
        [
            AttributeSchema("headphones", "input", ("yes", "no")),
            AttributeSchema("hour", "input", ("morning", "evening")),
            AttributeSchema("app", "output", ("music", "none")),
        ]
    )


@pytest.fixture
def f1_rows() -> list[TrainingRow]:
    return [
        TrainingRow({"headphones": "yes", "hour": "morning"}, {"app": "music"}),
        TrainingRow({"headphones": "yes", "hour": "morning"}, {"app": "music"}),
        TrainingRow({"headphones": "no", "hour": "morning"}, {"app": "none"}),
        TrainingRow({"headphones": "yes", "hour": "evening"}, {"app": "music"}),
        TrainingRow({"headphones": "no", "hour": "evening"}, {"app": "none"}),
    ]


@pytest.fixture
def f1(f1_schema, f1_rows) -> Dataset:
    return Dataset(f1_schema, f1_rows)
