"""Registry contents and schema enforcement."""

import dataclasses

import pytest

from porc.errors import ConfigError, DataFormatError
from porc.registry import (
    CATEGORY_SIZES,
    TOTAL_TASKS,
    get_task,
    load_registry,
    validate_registry,
)


@pytest.fixture(scope="module")
def tasks():
    return load_registry()


class TestContents:
    def test_exactly_112_tasks_in_id_order(self, tasks):
        assert len(tasks) == TOTAL_TASKS == 112
        assert [t.id for t in tasks] == list(range(1, 113))

    def test_category_sizes(self, tasks):
        counts = {}
        for t in tasks:
            counts[t.category] = counts.get(t.category, 0) + 1
        assert counts == CATEGORY_SIZES

    def test_names_unique(self, tasks):
        assert len({t.name for t in tasks}) == 112

    def test_slide_protocols_are_wsi_level(self, tasks):
        for t in tasks:
            if t.protocol in ("mil", "ridge-lopo"):
                assert t.level == "wsi", t.id
            else:
                assert t.level == "patch", t.id

    def test_split_policies(self, tasks):
        assert tasks[50].id == 51 and tasks[50].split == "8:2"
        for t in tasks:
            assert (t.split == "lopo") == (t.protocol == "ridge-lopo"), t.id
            metrics_only = t.protocol in ("segmentation-metrics", "detection-metrics")
            assert (t.split == "none") == metrics_only, t.id

    def test_molecular_block_is_ridge(self, tasks):
        for t in tasks[102:]:
            assert t.protocol == "ridge-lopo"
            assert t.metrics == ("pearson_mean",)

    def test_every_task_has_known_metrics(self, tasks):
        for t in tasks:
            assert len(t.metrics) >= 1
            if t.protocol in ("probe", "mil"):
                ranked = "auroc" if t.classes == 2 else "macro_auroc"
                assert ranked in t.metrics, t.id

    def test_get_task(self, tasks):
        assert get_task(51).name == tasks[50].name
        with pytest.raises(ConfigError):
            get_task(0)
        with pytest.raises(ConfigError):
            get_task(113)


class TestValidation:
    def test_wrong_level_names_the_task(self, tasks):
        broken = list(tasks)
        broken[12] = dataclasses.replace(broken[12], level="patch")  # a mil task
        with pytest.raises(DataFormatError, match="task 13"):
            validate_registry(broken)

    def test_bad_metric_rejected(self, tasks):
        broken = list(tasks)
        broken[0] = dataclasses.replace(broken[0], metrics=("made_up",))
        with pytest.raises(DataFormatError, match="task 1"):
            validate_registry(broken)

    def test_duplicate_name_rejected(self, tasks):
        broken = list(tasks)
        broken[1] = dataclasses.replace(broken[1], name=broken[0].name)
        with pytest.raises(DataFormatError, match="unique"):
            validate_registry(broken)

    def test_missing_task_rejected(self, tasks):
        with pytest.raises(DataFormatError, match="112"):
            validate_registry(tasks[:-1])

    def test_split_protocol_coupling_rejected(self, tasks):
        broken = list(tasks)
        broken[0] = dataclasses.replace(broken[0], split="lopo")
        with pytest.raises(DataFormatError, match="task 1"):
            validate_registry(broken)
