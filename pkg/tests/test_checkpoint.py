import pytest
import torch

from stagewise.errors import CheckpointMismatchError
from stagewise.model.backbone import BackboneConfig, BlockConfig, build_backbone
from stagewise.model.checkpoint import (
    architecture_fingerprint,
    check_compatible,
    load_checkpoint,
    restore_backbone,
    save_checkpoint,
)
from stagewise.model.heads import HeadConfig, build_head
from stagewise.partition import make_stages


@pytest.fixture()
def saved(tmp_path, small_backbone):
    model, specs = build_backbone(small_backbone, input_size=32)
    partition = make_stages(specs, 3)
    path = tmp_path / "model.ckpt"
    save_checkpoint(
        path, model, partition, input_size=32, step=17, completed_stage=2,
        meta={"seed": 0},
    )
    return path, model, partition


class TestRoundtrip:
    def test_states_survive_bit_exact(self, saved):
        path, model, _ = saved
        payload = load_checkpoint(path)
        assert payload["step"] == 17
        assert payload["completed_stage"] == 2
        restored, specs = restore_backbone(payload)
        for pa, pb in zip(model.state_dict().values(), restored.state_dict().values()):
            assert torch.equal(pa, pb)
        assert [s.name for s in specs] == ["B1", "B2", "B3", "B4", "B5"]

    def test_restored_model_forward_matches(self, saved):
        path, model, _ = saved
        restored, _ = restore_backbone(load_checkpoint(path))
        model.eval()
        restored.eval()
        x = torch.randn(2, 3, 32, 32)
        with torch.no_grad():
            assert torch.equal(model(x), restored(x))

    def test_heads_serialized_separately(self, tmp_path, small_backbone):
        model, specs = build_backbone(small_backbone, input_size=32)
        partition = make_stages(specs, 3)
        head = build_head(HeadConfig(kind="linear-classifier", in_features=16, out_dim=4), seed=0)
        path = tmp_path / "with_head.ckpt"
        save_checkpoint(path, model, partition, input_size=32, step=1, completed_stage=1,
                        heads={"head1": head})
        payload = load_checkpoint(path)
        assert set(payload["heads"]) == {"head1"}
        assert set(payload["blocks"]) == {f"block{i}" for i in range(1, 6)}


class TestValidation:
    def test_wrong_format_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        torch.save({"format": "something-else"}, path)
        with pytest.raises(CheckpointMismatchError, match="archive"):
            load_checkpoint(path)

    def test_version_gate(self, tmp_path, saved):
        path, _, _ = saved
        payload = torch.load(path, weights_only=True)
        payload["version"] = 99
        bad = tmp_path / "bad.ckpt"
        torch.save(payload, bad)
        with pytest.raises(CheckpointMismatchError, match="version"):
            load_checkpoint(bad)

    def test_fingerprint_diff_is_explicit(self, saved, small_backbone):
        path, _, _ = saved
        payload = load_checkpoint(path)
        other = BackboneConfig(
            input_channels=3, stem_width=8,
            blocks=small_backbone.blocks[:-1] + (BlockConfig(units=0, width=48, downsample=True),),
            seed=0,
        )
        with pytest.raises(CheckpointMismatchError, match="blocks"):
            check_compatible(payload, other)

    def test_fingerprint_ignores_seed(self, small_backbone):
        a = architecture_fingerprint(small_backbone)
        b = architecture_fingerprint(
            BackboneConfig(input_channels=3, stem_width=8, blocks=small_backbone.blocks, seed=99)
        )
        assert a == b
