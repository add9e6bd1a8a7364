"""
Checkpoint save/load: bit-exact restore, config fingerprints and corrupt files.
"""
import pytest
import torch

from lkcfunet import (
    Checkpoint,
    CheckpointError,
    FingerprintMismatchError,
    ModelConfig,
    TrainConfig,
    build_model,
    load_checkpoint,
    load_model,
    save_checkpoint,
)

from utils import desk_config, rand_pair


def _saved(tmp_path, cfg: ModelConfig | None = None, **kwargs):
    model = build_model(cfg or desk_config(), seed=0)
    path = save_checkpoint(tmp_path / "model.ckpt", Checkpoint.from_model(model, **kwargs))
    return model, path


@pytest.mark.smoke
def test_roundtrip_bit_identical_forward(tmp_path) -> None:
    """A reloaded model gives bit-identical outputs."""
    # Arrange
    model, path = _saved(tmp_path)
    x = rand_pair(0, 64)

    # Act
    restored = load_model(path, desk_config())
    with torch.no_grad():
        expected = model.eval()(x)
        actual = restored(x)

    # Assert
    assert torch.equal(expected, actual)
    assert not restored.training


def test_train_config_and_step_preserved(tmp_path) -> None:
    """The train config, step and optimizer state survive a save and load."""
    model = build_model(desk_config(), seed=0)
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-4)
    train_cfg = TrainConfig(max_steps=5, desk_scale=True)
    path = save_checkpoint(
        tmp_path / "c.ckpt",
        Checkpoint.from_model(model, train_config=train_cfg, optimizer=optimizer, step=5),
    )
    loaded = load_checkpoint(path)
    assert loaded.train_config == train_cfg
    assert loaded.step == 5
    assert loaded.optimizer_state is not None
    assert loaded.fingerprint == Checkpoint.from_model(model).fingerprint


def test_mismatch_names_the_field(tmp_path) -> None:
    """Loading a checkpoint into a different configuration names the differing field."""
    _, path = _saved(tmp_path)
    with pytest.raises(FingerprintMismatchError, match="use_mpafm") as info:
        load_checkpoint(path, desk_config(use_mpafm=False))
    assert info.value.fields == ["use_mpafm"]


def test_desk_vs_default_widths(tmp_path) -> None:
    """A desk-width checkpoint does not load into the default widths."""
    _, path = _saved(tmp_path)
    with pytest.raises(FingerprintMismatchError) as info:
        load_checkpoint(path, ModelConfig())
    assert "channel_widths" in info.value.fields


def test_mismatch_is_a_checkpoint_error(tmp_path) -> None:
    """A fingerprint mismatch is also caught as a CheckpointError."""
    _, path = _saved(tmp_path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, desk_config(kernel_schedule=(3, 3, 3, 3)))


@pytest.mark.parametrize(
    "content",
    [b"", b"LKC", b"XXXX\x01payload", b"LKCF\x09payload", b"LKCF\x01not a torch file"],
)
def test_corrupt_files(tmp_path, content: bytes) -> None:
    """Empty, truncated, wrong-magic, wrong-version and garbage files raise CheckpointError."""
    path = tmp_path / "bad.ckpt"
    path.write_bytes(content)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_truncated_payload(tmp_path) -> None:
    """A file cut in half raises CheckpointError."""
    _, path = _saved(tmp_path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_missing_file(tmp_path) -> None:
    """A missing checkpoint raises CheckpointError."""
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_atomic_write_leaves_no_temp_files(tmp_path) -> None:
    """Saving twice to one path leaves only the final file."""
    _saved(tmp_path)
    _saved(tmp_path)
    assert [p.name for p in tmp_path.iterdir()] == ["model.ckpt"]
