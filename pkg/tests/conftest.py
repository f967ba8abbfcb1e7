import numpy as np
import pytest

from lidarpatch import cnn
from lidarpatch.rangeimage import ProjectionConfig
from lidarpatch.synthetic import SceneBuilder, write_scene

FIXTURE_PROJ = ProjectionConfig(height=32, width=512)


def build_fixture_scene(seed: int):
    """Collision-free street scene: ground, a car, a pedestrian, a wall."""
    rng = np.random.default_rng(seed)
    sb = SceneBuilder(FIXTURE_PROJ)
    sb.add_plane(rows=range(20, 32), cols=range(512), point=(0, 0, -1.8),
                 normal=(0, 0, 1), semantic=40, intensity=0.3)
    car_c = int(rng.integers(80, 120))
    sb.add_billboard(rows=range(12, 18), cols=range(car_c, car_c + 28),
                     distance=7.5, intensity=0.8, semantic=10, instance=1,
                     depth_jitter=0.02, rng=rng)
    ped_c = int(rng.integers(240, 280))
    sb.add_billboard(rows=range(10, 17), cols=range(ped_c, ped_c + 5),
                     distance=6.0, intensity=0.5, semantic=30, instance=2,
                     depth_jitter=0.02, rng=rng)
    wall_c = int(rng.integers(380, 420))
    sb.add_billboard(rows=range(6, 18), cols=range(wall_c, wall_c + 60),
                     distance=14.0, intensity=0.2, semantic=50, instance=0,
                     depth_jitter=0.02, rng=rng)
    return sb.build(source_id=f"{seed:06d}")


@pytest.fixture(scope="session")
def fixture_dataset(tmp_path_factory):
    """Two-scan KITTI-layout dataset plus a matching random weight file."""
    root = tmp_path_factory.mktemp("dataset")
    seq = root / "sequences" / "00"
    (seq / "velodyne").mkdir(parents=True)
    (seq / "labels").mkdir(parents=True)
    for seed in (0, 1):
        labeled = build_fixture_scene(seed)
        write_scene(labeled, seq / "velodyne" / f"{seed:06d}.bin",
                    seq / "labels" / f"{seed:06d}.label")

    weights = root / "model.lcnw"
    cnn.save_weights(cnn.init_random(0), weights)

    config = root / "pipeline.ini"
    config.write_text(
        "[projection]\n"
        f"height = {FIXTURE_PROJ.height}\n"
        f"width = {FIXTURE_PROJ.width}\n"
        "[cluster]\n"
        "min_points = 10\n"
        "[model]\n"
        f"weights = {weights}\n"
        "[data]\n"
        f"root = {root}\n"
        "sequence = 00\n"
    )
    return {"root": root, "config": config, "weights": weights}


def oracle_classifier(batch):
    """Scores forced from the ground-truth class carried by each patch."""
    probs = np.zeros((len(batch), 5), dtype=np.float32)
    for i, gt in enumerate(batch.gt_classes):
        probs[i, int(gt) if gt != 255 else 0] = 1.0
    return probs
