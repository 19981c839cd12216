"""Pulling trained sub-models back out of a hybrid."""
import numpy as np
import pytest

from hybridnn import engine, unify
from hybridnn.separate import load_package, package, separate
from hybridnn.errors import HybridnnError, UnknownJobError
from hybridnn.model import HyperParams, TrainingJob
from hybridnn.schedule import make_plan
from hybridnn.train import Trainer

from conftest import (
    blob_splits,
    cnn_graph,
    dataset_of,
    deep_mlp_graph,
    image_splits,
    job_of,
    mlp_graph,
)


def job(job_id, graph, seq, seed=0):
    return TrainingJob(
        job_id=job_id, graph=graph, dataset_hash="00" * 32,
        hypers=HyperParams(epochs=1, batch_size=8, learning_rate=0.1, seed=seed),
        arrival_seq=seq, priority=seq,
    )


class TestSeparate:
    def test_untrained_roundtrip_is_exact(self):
        jobs = [job("a", mlp_graph(), 0, seed=1), job("b", cnn_graph(), 1, seed=2)]
        hybrid = unify.merge(jobs)
        for j in jobs:
            graph, params = separate(hybrid, j.job_id)
            assert graph == j.graph
            fresh = engine.init_params(j.graph, j.hypers.seed)
            assert sorted(params) == sorted(fresh)
            for pid in fresh:
                assert np.array_equal(params[pid], fresh[pid]), pid

    def test_trained_values_come_back_not_the_seeds(self):
        ds = dataset_of(blob_splits("sep-train", 2, 8, 64, 16))
        j = job_of(mlp_graph(), ds, 0, epochs=2, job_id="a")
        hybrid = unify.merge([j])
        Trainer(hybrid, make_plan("fcfs", [j]), [j], {"a": ds}).run()
        _, params = separate(hybrid, "a")
        seeded = engine.init_params(mlp_graph(), 0)
        assert not np.array_equal(params["fc1.weight"], seeded["fc1.weight"])
        merged = hybrid.sub_params("a")
        for pid, arr in params.items():
            assert np.array_equal(arr, merged[f"a/{pid}"])

    def test_separation_copies_instead_of_aliasing(self):
        hybrid = unify.merge([job("a", mlp_graph(), 0)])
        _, params = separate(hybrid, "a")
        params["fc1.bias"][0] = 77.0
        assert hybrid.params["a/fc1.bias"][0] != 77.0

    def test_unknown_job_raises(self):
        hybrid = unify.merge([job("a", mlp_graph(), 0)])
        with pytest.raises(UnknownJobError):
            separate(hybrid, "nope")

    def test_corrupted_store_is_detected(self):
        hybrid = unify.merge([job("a", mlp_graph(), 0)])
        del hybrid.params["a/fc1.weight"]
        with pytest.raises(HybridnnError, match="namespace mapping corrupted"):
            separate(hybrid, "a")

    def test_every_policy_separates_every_job(self):
        ds_a = dataset_of(blob_splits("sep-a", 2, 8, 32, 8))
        ds_b = dataset_of(blob_splits("sep-b", 4, 12, 32, 8))
        ds_c = dataset_of(image_splits("sep-c", 2, 8, 32, 8))
        ja = job_of(mlp_graph(), ds_a, 0, epochs=2, seed=1, job_id="a")
        jb = job_of(deep_mlp_graph(), ds_b, 1, epochs=1, seed=2, job_id="b")
        jc = job_of(cnn_graph(), ds_c, 2, epochs=2, seed=3, job_id="c")
        jobs = [ja, jb, jc]
        datasets = {"a": ds_a, "b": ds_b, "c": ds_c}
        for policy in ("fcfs", "priority", "sjf", "rr"):
            hybrid = unify.merge(jobs)
            Trainer(hybrid, make_plan(policy, jobs), jobs, datasets).run()
            for j in jobs:
                graph, params = separate(hybrid, j.job_id)
                assert graph == j.graph
                assert sorted(params) == sorted(engine.param_specs(j.graph))


class TestPackage:
    def trained(self):
        ds = dataset_of(blob_splits("pkg-train", 2, 8, 64, 16))
        j = job_of(mlp_graph(), ds, 0, epochs=2, job_id="a")
        hybrid = unify.merge([j])
        Trainer(hybrid, make_plan("fcfs", [j]), [j], {"a": ds}).run()
        return separate(hybrid, "a")

    def test_roundtrip_through_bytes_is_exact(self):
        graph, params = self.trained()
        blob = package(graph, params)
        back_graph, back_params = load_package(blob)
        assert back_graph == graph
        for pid, arr in params.items():
            assert np.array_equal(back_params[pid], arr), pid

    def test_header_declares_the_parameter_count(self):
        from hybridnn import formats

        graph, params = self.trained()
        header, _ = formats.decode_model(package(graph, params))
        assert header["param_count"] == engine.param_count(graph)
        assert header["graph"] == graph.to_dict()

    def test_packaging_is_deterministic(self):
        graph, params = self.trained()
        assert package(graph, params) == package(graph, params)

    def test_missing_parameter_rejected(self):
        graph, params = self.trained()
        del params["fc2.bias"]
        with pytest.raises(HybridnnError, match="missing parameter"):
            package(graph, params)

    def test_wrong_shape_rejected(self):
        graph, params = self.trained()
        params["fc2.bias"] = np.zeros(7, dtype=np.float32)
        with pytest.raises(HybridnnError, match="shape"):
            package(graph, params)

    def test_extra_parameter_rejected(self):
        graph, params = self.trained()
        params["mystery"] = np.zeros(3, dtype=np.float32)
        with pytest.raises(HybridnnError, match="unexpected parameters"):
            package(graph, params)

    def test_load_rejects_params_that_disagree_with_the_graph(self):
        from hybridnn import formats

        graph, params = self.trained()
        blob = package(graph, params)
        header, sections = formats.decode_model(blob)
        sections.pop("fc1.bias")
        header["param_count"] -= 16
        tampered = formats.encode_model(header, sections, sorted(sections))
        with pytest.raises(HybridnnError, match="do not match"):
            load_package(tampered)
