from starctr.config import RunConfig, default_model_for_synthetic
from starctr.data import BatchPlan, SyntheticSpec
from starctr.experiment import FUSION_ROWS, NORM_ROWS, CellResult, run_experiment
from starctr.optim import AdamConfig


def tiny_spec(seed=1):
    return SyntheticSpec(
        num_domains=2,
        domain_shares=(0.6, 0.4),
        target_ctrs=(0.2, 0.35),
        vocab_sizes=(8, 6),
        seed=seed,
    )


def base_config(spec, seed=3, n=600):
    return RunConfig(
        seed=seed,
        model=default_model_for_synthetic(
            spec, tower_widths=(6,), tower_output_dim=3, embedding_dim=3, seed=seed
        ),
        adam=AdamConfig(learning_rate=0.01),
        plan=BatchPlan(batch_size=50, seed=seed),
        synthetic=spec,
        train_n=n,
        epochs=1,
    )


def test_grid_has_expected_rows_and_cells():
    spec = tiny_spec()
    result = run_experiment(base_config(spec), [("tiny", spec)])
    assert result.dataset_names == ["tiny"]
    assert set(result.fusion_cells) == {("tiny", a, f) for a, f in FUSION_ROWS}
    assert set(result.norm_cells) == {
        ("tiny", n, a) for n in NORM_ROWS for a in ("star", "star_plus")
    }
    for cell in result.fusion_cells.values():
        assert cell.error is None
        assert cell.auc is not None and 0.0 <= cell.auc <= 1.0
        assert cell.logloss is not None and cell.logloss >= 0.0


def test_tables_carry_expected_layouts():
    spec = tiny_spec()
    result = run_experiment(base_config(spec), [("tiny", spec)])
    fusion_lines = result.fusion_table().splitlines()
    assert len(fusion_lines) == 1 + 5  # header + five model rows
    assert fusion_lines[0].split() == ["Model", "Fusion", "tiny", "Loss", "tiny", "AUC"]
    assert fusion_lines[1].startswith("Star ")
    assert [l.split()[1] for l in fusion_lines[2:]] == ["Add", "Concat", "Gate", "Adaptive"]

    norm_lines = result.norm_table().splitlines()
    assert len(norm_lines) == 1 + 4  # header + four normalization rows
    assert norm_lines[0].split() == ["Type", "tiny", "Star", "tiny", "Star+"]
    assert [l.split()[0] for l in norm_lines[1:]] == ["No", "LayerNorm", "BatchNorm", "PartitionNorm"]

    fusion_csv = result.fusion_csv()
    assert fusion_csv[0] == "dataset,model,fusion,logloss,auc"
    assert len(fusion_csv) == 1 + 5
    norm_csv = result.norm_csv()
    assert norm_csv[0] == "dataset,normalization,model,auc"
    assert len(norm_csv) == 1 + 8


def test_experiment_is_deterministic():
    spec = tiny_spec()
    a = run_experiment(base_config(spec), [("tiny", spec)])
    b = run_experiment(base_config(spec), [("tiny", spec)])
    assert a.fusion_csv() == b.fusion_csv()
    assert a.norm_csv() == b.norm_csv()


def test_failed_cell_is_recorded_and_grid_continues(monkeypatch):
    import starctr.experiment as exp

    spec = tiny_spec()
    original = exp._run_cell
    calls = {"n": 0}

    def flaky(spec_, base, architecture, norm_kind, fusion_kind):
        calls["n"] += 1
        if architecture == "star" and norm_kind == "partition":
            return CellResult(error="injected failure")
        return original(spec_, base, architecture, norm_kind, fusion_kind)

    monkeypatch.setattr(exp, "_run_cell", flaky)
    result = exp.run_experiment(base_config(spec), [("tiny", spec)])
    broken = result.fusion_cells[("tiny", "star", None)]
    assert broken.error == "injected failure"
    assert "failed" in result.fusion_table()
    healthy = result.fusion_cells[("tiny", "star_plus", "add")]
    assert healthy.auc is not None


def test_degenerate_grid_of_one_cell_matches_direct_training():
    from starctr.data import generate, split_dataset
    from starctr.model import build_model
    from starctr.training import evaluate_model, train_model

    spec = tiny_spec()
    base = base_config(spec)
    result = run_experiment(base, [("tiny", spec)])
    cell = result.norm_cells[("tiny", "layer", "star_plus")]

    ds = generate(spec, base.train_n)
    train_ds, valid_ds = split_dataset(ds, base.valid_fraction, base.seed)
    model_cfg = default_model_for_synthetic(
        spec, architecture="star_plus", norm_kind="layer",
        tower_widths=base.model.tower_widths,
        tower_output_dim=base.model.tower_output_dim,
        embedding_dim=base.model.fields[0].embedding_dim, seed=base.seed,
    )
    model = build_model(model_cfg)
    train_model(model, base.adam, train_ds, valid_ds, base.plan, epochs=base.epochs)
    rep = evaluate_model(model, valid_ds, base.plan.batch_size)
    assert cell.auc == rep.overall.auc
    assert cell.logloss == rep.overall.logloss
