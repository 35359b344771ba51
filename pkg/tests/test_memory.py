#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : test_memory.py
@Time    : 2025年08月12日 16:40:00
@Author  : 宝总
@Version : 1.0
@Desc    : 转移记忆测试
"""

import numpy as np
import pandas as pd
import pytest

from memory.transition_memory import TransitionMemory, TrialEntry
from models.gp_model import DATASET_COLUMNS, GpDataset


@pytest.fixture
def memory(tmp_path):
    store = TransitionMemory(tmp_path / "transitions.db", sampling_time=0.02)
    yield store
    store.close()


def test_recall_preserves_insertion_order(memory, rng, make_dataset):
    first, second = make_dataset(rng, 5), make_dataset(rng, 3)
    assert memory.add_transitions(first, trial=-1) == 5
    assert memory.add_transitions(second, trial=0) == 3
    assert len(memory) == 8

    recalled = memory.recall()
    np.testing.assert_array_equal(recalled.inputs, np.vstack([first.inputs, second.inputs]))
    np.testing.assert_array_equal(recalled.targets, np.vstack([first.targets, second.targets]))
    assert recalled.sampling_time == 0.02


def test_fresh_store_drops_old_rows(tmp_path, rng, make_dataset):
    path = tmp_path / "transitions.db"
    store = TransitionMemory(path)
    store.add_transitions(make_dataset(rng, 5), trial=0)
    store.record_trial(TrialEntry(0, 0.0, 5, True))
    store.close()

    data = make_dataset(rng, 3)
    fresh = TransitionMemory(path, fresh=True)
    assert len(fresh) == 0
    assert fresh.trials() == []
    fresh.add_transitions(data, trial=-1)
    np.testing.assert_array_equal(fresh.recall().inputs, data.inputs)
    assert fresh.to_frame()["trial"].tolist() == [-1, -1, -1]
    fresh.close()


def test_empty_memory(memory):
    assert len(memory) == 0
    assert len(memory.recall()) == 0
    assert memory.add_transitions(GpDataset.empty(0.02), trial=0) == 0


def test_sampling_time_mismatch(memory, rng, make_dataset):
    with pytest.raises(ValueError):
        memory.add_transitions(make_dataset(rng, 3, 0.01), trial=0)


def test_trials_and_report(memory, rng, make_dataset, tmp_path):
    memory.add_transitions(make_dataset(rng, 6), trial=-1)
    memory.add_transitions(make_dataset(rng, 4), trial=0)
    memory.record_trial(TrialEntry(-1, 0.0, 6, True, {"kind": "exploration"}))
    memory.record_trial(TrialEntry(0, 0.0, 4, False))

    trials = memory.trials()
    assert [t.trial for t in trials] == [-1, 0]
    assert trials[0].payload == {"kind": "exploration"}
    assert not trials[1].success

    report = memory.generate_report()
    assert report["total_transitions"] == 10
    assert report["per_trial"] == {-1: 6, 0: 4}
    assert report["failed_trials"] == 1

    path = memory.export_csv(tmp_path / "transitions.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["trial"] + DATASET_COLUMNS
    assert len(frame) == 10


def test_persists_across_connections(tmp_path, rng, make_dataset):
    path = tmp_path / "store" / "transitions.db"
    store = TransitionMemory(path)
    store.add_transitions(make_dataset(rng, 7), trial=2)
    store.close()

    reopened = TransitionMemory(path)
    assert len(reopened) == 7
    reopened.close()
