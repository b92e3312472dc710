import pytest

from stagewise.engine.schedule import PAPER_PHASES, StageSchedule, lr_at


class TestFromPhases:
    def test_paper_phase_lengths(self):
        s = StageSchedule.from_phases(PAPER_PHASES, base_lr=0.01)
        assert s.epochs == 60
        assert s.lr_milestones == (20, 40, 50)

    def test_validation(self):
        with pytest.raises(ValueError):
            StageSchedule.from_phases((), base_lr=0.01)
        with pytest.raises(ValueError):
            StageSchedule.from_phases((5, 0), base_lr=0.01)
        with pytest.raises(ValueError):
            StageSchedule(epochs=10, lr_milestones=(4, 4))
        with pytest.raises(ValueError):
            StageSchedule(epochs=10, lr_milestones=(12,))
        with pytest.raises(ValueError):
            StageSchedule(epochs=0, lr_milestones=())


class TestLrAt:
    def test_reference_schedule_values(self):
        s = StageSchedule.from_phases((20, 20, 10, 10), base_lr=0.01)
        assert lr_at(s, 0) == pytest.approx(0.01)
        assert lr_at(s, 19) == pytest.approx(0.01)
        assert lr_at(s, 20) == pytest.approx(0.001)
        assert lr_at(s, 40) == pytest.approx(1e-4)
        assert lr_at(s, 50) == pytest.approx(1e-5)
        assert lr_at(s, 59) == pytest.approx(1e-5)

    def test_single_phase_is_constant(self):
        s = StageSchedule.from_phases((8,), base_lr=0.3)
        assert all(lr_at(s, e) == pytest.approx(0.3) for e in range(8))

    def test_epoch_out_of_range(self):
        s = StageSchedule.from_phases((4,), base_lr=0.1)
        with pytest.raises(ValueError):
            lr_at(s, -1)
        with pytest.raises(ValueError):
            lr_at(s, 4)

    def test_custom_decay_factor(self):
        s = StageSchedule.from_phases((2, 2), base_lr=1.0, lr_decay=0.5)
        assert lr_at(s, 1) == pytest.approx(1.0)
        assert lr_at(s, 2) == pytest.approx(0.5)
