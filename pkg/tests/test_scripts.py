"""Smoke runs of the figure scripts at a tiny scale."""

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parents[1] / "scripts"))

import fig4_methods  # noqa: E402
import fig6_blind_cib  # noqa: E402
import fig8_blind_rpp  # noqa: E402
import fig9_bright  # noqa: E402
import fig10_noise  # noqa: E402

TINY = {"n": 16, "m": 8, "tau": 4, "perturb_range": 1, "epochs": 3}


@pytest.mark.parametrize("module, cfg", [
    (fig4_methods, fig4_methods.Fig4Config(n=16, max_iters=20, drs_rhos=(0.3,), raar_betas=(0.9,))),
    (fig6_blind_cib, fig6_blind_cib.Fig6Config(**TINY)),
    (fig8_blind_rpp, fig8_blind_rpp.Fig8Config(**TINY, include_plain=False)),
    (fig9_bright, fig9_bright.Fig9Config(**TINY, margin=4, caps=(5,))),
    (fig10_noise, fig10_noise.Fig10Config(**TINY, nsr_targets=(0.1,))),
])
def test_script_runs(tmp_path, module, cfg):
    module.run(cfg, out=tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"]["n"] == 16
    assert any(p.suffix == ".csv" for p in tmp_path.iterdir())
