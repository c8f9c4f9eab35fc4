"""HTTP service exposing the toolkit pipeline.

Endpoints operate on server-side SWD1/model files: requests carry file
paths plus inline configuration, responses return the written outputs and
a reproducibility manifest. Every run with identical inputs, config and
seeds writes byte-identical payload files.
"""

import csv
import hashlib
import json
import time

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import InvalidRangeError, SweiError
from ..fields import DatasetRecord, DisplacementSequence, ElasticityMap
from ..geometry import GridGeom, PushDescriptor
from ..metrics import bench_throughput, dice, mae, mean_threshold
from ..phantom import Inclusion, Material, PhantomSpec, render_elasticity_map
from ..swdio import read_dataset, write_dataset
from ..tof import TofConfig, estimate_elasticity, fuse_pushes
from ..wavesim import SimConfig, simulate
from ..cnn import ArchSpec, TrainConfig, finetune, load_params, predict_map, save_params, train
from . import schemas as S


def _geom(m: S.GridGeomModel) -> GridGeom:
    return GridGeom(m.depth_px, m.lateral_px, m.depth_extent, m.lateral_extent)


def _push(m: S.PushModel, center=None) -> PushDescriptor:
    return PushDescriptor(
        lateral_center_px=m.lateral_center_px if center is None else int(center),
        element_halfwidth_px=m.element_halfwidth_px,
        depth_extent=m.depth_extent,
        start_delay=m.start_delay,
    )


def _tof_config(m: S.TofConfigModel) -> TofConfig:
    return TofConfig(**m.model_dump())


def _manifest(command, config_obj, seeds, inputs, outputs, t0) -> S.Manifest:
    blob = json.dumps(config_obj, sort_keys=True).encode("utf-8")
    return S.Manifest(
        command=command,
        tool_version=__version__,
        config_sha256=hashlib.sha256(blob).hexdigest(),
        seeds=[int(s) for s in seeds],
        inputs=[str(p) for p in inputs],
        outputs=[str(p) for p in outputs],
        wall_time_s=time.monotonic() - t0,
    )


def _finish(command, config_obj, seeds, inputs, outputs, t0, detail=None) -> S.PathResponse:
    manifest = _manifest(command, config_obj, seeds, inputs, outputs, t0)
    with open(outputs[0] + ".manifest.json", "w") as fh:
        json.dump(manifest.model_dump(), fh, indent=1)
    return S.PathResponse(outputs=list(outputs), manifest=manifest, detail=detail or {})


def default_push_centers(lateral_px: int, count: int = 7):
    """Push locations spread evenly across the probe length."""
    return [round(lateral_px * (i + 1) / (count + 1)) for i in range(count)]


def write_pgm(values, path, lo, hi):
    """8-bit binary PGM with [lo, hi] mapped linearly to 0..255.

    Missing pixels render as 0; a sidecar <path>.mask.pgm marks them
    (255 = present).
    """
    if lo >= hi:
        raise InvalidRangeError(f"range lo {lo} must be below hi {hi}")
    v = np.asarray(values, dtype=np.float64)
    present = np.isfinite(v)
    gray = np.zeros(v.shape, dtype=np.uint8)
    scaled = np.clip((v[present] - lo) / (hi - lo), 0.0, 1.0)
    gray[present] = np.rint(scaled * 255.0).astype(np.uint8)
    header = f"P5\n{v.shape[1]} {v.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + gray.tobytes())
    mask = np.where(present, 255, 0).astype(np.uint8)
    with open(str(path) + ".mask.pgm", "wb") as fh:
        fh.write(header + mask.tobytes())


def create_app() -> FastAPI:
    app = FastAPI(title="sweikit", version=__version__)

    @app.exception_handler(SweiError)
    def _swei_error(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(
            status_code=422,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/phantom", response_model=S.PathResponse)
    def phantom(req: S.PhantomRequest):
        t0 = time.monotonic()
        geom = _geom(req.config.geom)
        spec = PhantomSpec(
            geom=geom,
            background=Material(**req.config.background.model_dump()),
            inclusions=tuple(
                Inclusion(
                    center_px=tuple(inc.center_px),
                    radius=inc.radius,
                    material=Material(**inc.material.model_dump()),
                )
                for inc in req.config.inclusions
            ),
        )
        emap = render_elasticity_map(spec)
        write_dataset([emap], req.out_path)
        outputs = [req.out_path]
        if req.preview_pgm:
            vals = emap.values
            write_pgm(vals, req.preview_pgm, float(np.min(vals)) - 1.0, float(np.max(vals)) + 1.0)
            outputs.append(req.preview_pgm)
        return _finish("phantom", req.config.model_dump(), [], [], outputs, t0)

    @app.post("/simulate", response_model=S.PathResponse)
    def simulate_batch(req: S.SimulateRequest):
        t0 = time.monotonic()
        maps = [r for r in read_dataset(req.phantom_path) if isinstance(r, ElasticityMap)]
        if not maps:
            raise HTTPException(status_code=422, detail="phantom file holds no map record")
        emap = maps[0]
        cfg = req.config
        geom = emap.geom
        centers = cfg.push_lateral_px or default_push_centers(geom.lateral_px)
        vals = emap.values
        homogeneous = bool(np.nanmax(vals) == np.nanmin(vals))
        records = []
        rng = np.random.default_rng(cfg.seed)
        for pos in range(cfg.positions):
            jitter = int(rng.integers(-5, 6))
            for push_id, center in enumerate(centers, start=1):
                center_px = int(np.clip(center + jitter, 0, geom.lateral_px - 1))
                sim = SimConfig(
                    geom=geom,
                    push=_push(cfg.push, center=center_px),
                    frames=cfg.frames,
                    frame_rate=cfg.frame_rate,
                    cfl_factor=cfg.cfl_factor,
                    absorb_width_px=cfg.absorb_width_px,
                    absorb_strength=cfg.absorb_strength,
                    push_amplitude=cfg.push_amplitude,
                    noise_std=cfg.noise_std,
                    seed=int(rng.integers(2**31)),
                    plane_push=cfg.plane_push,
                )
                seq = simulate(emap, sim)
                records.append(
                    DatasetRecord(
                        sequence=seq,
                        label=float(vals[0, 0]) if homogeneous else None,
                        label_map=None if homogeneous else emap,
                        phantom_id=cfg.phantom_id,
                        position_id=pos,
                        push_id=push_id,
                    )
                )
        write_dataset(records, req.out_path)
        return _finish(
            "simulate", cfg.model_dump(), [cfg.seed], [req.phantom_path], [req.out_path], t0,
            detail={"sequences": len(records)},
        )

    @app.post("/tof", response_model=S.PathResponse)
    def tof(req: S.TofRequest):
        t0 = time.monotonic()
        records = read_dataset(req.in_path)
        seqs = [r.sequence for r in records if isinstance(r, DatasetRecord)]
        if not seqs:
            raise HTTPException(status_code=422, detail="input holds no sequences")
        cfg = _tof_config(req.config)
        maps = [estimate_elasticity(s, cfg) for s in seqs]
        fused = fuse_pushes(maps, cfg)
        write_dataset([fused], req.out_path)
        return _finish(
            "tof", req.config.model_dump(), [], [req.in_path], [req.out_path], t0,
            detail={"sequences": len(seqs)},
        )

    @app.post("/train", response_model=S.PathResponse)
    def train_model(req: S.TrainRequest):
        t0 = time.monotonic()
        records = [r for r in read_dataset(req.data_path) if isinstance(r, DatasetRecord)]
        if not records:
            raise HTTPException(status_code=422, detail="no training records")
        arch_args = req.arch.model_dump()
        stride = arch_args.pop("spatial_stride")
        if stride is None:
            arch = ArchSpec.for_window(arch_args.pop("window_size"), **arch_args)
        else:
            arch = ArchSpec(spatial_stride=stride, **arch_args)
        cfg_args = req.config.model_dump()
        val_fraction = cfg_args.pop("val_fraction")
        ft_epochs = cfg_args.pop("finetune_epochs")
        cfg = TrainConfig(**cfg_args)

        positions = sorted({r.position_id for r in records})
        n_val = max(1, int(round(len(positions) * val_fraction))) if len(positions) > 1 else 0
        val_pos = set(positions[-n_val:]) if n_val else set()
        train_recs = [r for r in records if r.position_id not in val_pos]
        val_recs = [r for r in records if r.position_id in val_pos]
        params, history = train(train_recs, arch, cfg, val_records=val_recs or None)

        if req.finetune_data_path:
            ft = [r for r in read_dataset(req.finetune_data_path) if isinstance(r, DatasetRecord)]
            params, ft_hist = finetune(params, ft, epochs=ft_epochs, cfg=cfg)
            history = history + ft_hist
        save_params(params, req.model_out)
        outputs = [req.model_out]
        if req.history_out:
            with open(req.history_out, "w", newline="") as fh:
                wr = csv.DictWriter(fh, fieldnames=["epoch", "lr", "train_loss", "val_loss"])
                wr.writeheader()
                wr.writerows(history)
            outputs.append(req.history_out)
        return _finish(
            "train",
            {"arch": req.arch.model_dump(), "train": req.config.model_dump()},
            [cfg.seed], [req.data_path], outputs, t0,
            detail={"epochs": len(history), "train_records": len(train_recs)},
        )

    @app.post("/predict", response_model=S.PathResponse)
    def predict(req: S.PredictRequest):
        t0 = time.monotonic()
        params = load_params(req.model_path)
        records = [r for r in read_dataset(req.in_path) if isinstance(r, DatasetRecord)]
        if not records:
            raise HTTPException(status_code=422, detail="input holds no sequences")
        maps = [predict_map(params, r.sequence, stride=req.stride) for r in records]
        write_dataset(maps, req.out_path)
        return _finish(
            "predict", {"stride": req.stride}, [], [req.model_path, req.in_path],
            [req.out_path], t0, detail={"maps": len(maps)},
        )

    @app.post("/eval", response_model=S.PathResponse)
    def evaluate(req: S.EvalRequest):
        t0 = time.monotonic()
        preds = [r for r in read_dataset(req.pred_path) if isinstance(r, ElasticityMap)]
        truths = [r for r in read_dataset(req.truth_path) if isinstance(r, ElasticityMap)]
        if not preds or not truths:
            raise HTTPException(status_code=422, detail="need map records on both sides")
        truth = truths[0]
        rows = []
        for i, pred in enumerate(preds):
            mean, std, fraction = mae(pred, truth)
            rows.append({"map": i, "metric": "mae_pa", "value": mean})
            rows.append({"map": i, "metric": "mae_std_pa", "value": std})
            rows.append({"map": i, "metric": "present_fraction", "value": fraction})
            if req.dice_threshold is not None:
                tvals = np.asarray(truth.values, dtype=np.float64)
                lo = float(np.nanmin(tvals))
                mask = tvals >= req.dice_threshold
                rows.append(
                    {"map": i, "metric": "dice", "value": dice(pred, mask, req.dice_threshold)}
                )
        with open(req.metrics_out, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=["map", "metric", "value"])
            wr.writeheader()
            wr.writerows(rows)
        summary_path = req.metrics_out + ".json"
        with open(summary_path, "w") as fh:
            json.dump({"metrics": rows}, fh, indent=1)
        return _finish(
            "eval", req.model_dump(), [], [req.pred_path, req.truth_path],
            [req.metrics_out, summary_path], t0,
        )

    @app.post("/bench")
    def bench(req: S.BenchRequest):
        params = load_params(req.model_path)
        return bench_throughput(params, n=req.n)

    @app.post("/render", response_model=S.PathResponse)
    def render(req: S.RenderRequest):
        t0 = time.monotonic()
        maps = [r for r in read_dataset(req.map_path) if isinstance(r, ElasticityMap)]
        if not maps:
            raise HTTPException(status_code=422, detail="no map records to render")
        if not 0 <= req.record_index < len(maps):
            raise HTTPException(status_code=422, detail="record_index out of range")
        emap = maps[req.record_index]
        vals = np.asarray(emap.values, dtype=np.float64)
        if req.out_path.endswith(".csv"):
            np.savetxt(req.out_path, vals, delimiter=",", fmt="%.6g")
            outputs = [req.out_path]
        else:
            write_pgm(vals, req.out_path, req.lo, req.hi)
            outputs = [req.out_path, req.out_path + ".mask.pgm"]
        return _finish("render", req.model_dump(), [], [req.map_path], outputs, t0)

    return app


app = create_app()
