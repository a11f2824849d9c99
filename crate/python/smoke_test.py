"""Builds the extension with cargo, imports it and exercises every binding."""

import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def build():
    subprocess.run(["cargo", "build", "--release", "-p", "mlcl-py"], cwd=ROOT, check=True)
    lib = os.path.join(ROOT, "target", "release", "libmlcl.so")
    out = tempfile.mkdtemp(prefix="mlcl-py-")
    shutil.copy(lib, os.path.join(out, "mlcl.so"))
    sys.path.insert(0, out)


def unit(v):
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def main():
    build()
    import mlcl

    assert len(mlcl.rule_space("pair")) == 38
    assert len(mlcl.rule_space("triple")) == 50

    inst = mlcl.generate_instance("center", 3)
    assert inst["satisfying"] == [inst["correct_index"]]
    assert len(inst["rasters"]) == 16 and len(inst["rasters"][0]) == 28 * 28
    assert len(inst["sparse"]) == 38

    z = [unit([1.0, 0.2, 0.0]), unit([0.9, 0.1, 0.3]), unit([0.0, 1.0, 0.5])]
    single = mlcl.supcon_loss(z, [0, 0, 1], 0.1)
    multi = mlcl.mlc_loss(z, [[0], [0], [1]], 0.1)
    assert abs(single - multi) < 1e-12
    with_neg = mlcl.mlc_loss(z, [[0, 2], [2], [1]], 0.1, zneg=[unit([0.0, 0.0, 1.0])] * 3)
    assert with_neg > 0

    with tempfile.TemporaryDirectory() as tmp:
        small = {"count": "24", "panel_size": "12", "encoder": "mlp", "epochs": "1",
                 "linear_epochs": "2", "batch_size": "8", "test_count": "16"}
        data = os.path.join(tmp, "d.mlds")
        count, digest = mlcl.generate_dataset(data, small)
        assert count == 24 and len(digest) == 64
        assert mlcl.verify_dataset(data) == (24, [])
        run_dir, report = mlcl.train(data, "ce-aux-sparse", os.path.join(tmp, "runs"), small)
        assert os.path.isfile(os.path.join(run_dir, "report.json"))
        assert "test_accuracy" in report
        assert "test accuracy" in mlcl.report(run_dir)
        try:
            mlcl.train(data, "nope", tmp, small)
        except ValueError:
            pass
        else:
            raise AssertionError("unknown mode accepted")

    print("python smoke test ok, mlcl", mlcl.__version__)


if __name__ == "__main__":
    main()
