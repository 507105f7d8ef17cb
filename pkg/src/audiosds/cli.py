"""Command-line front end.

Tasks: synth-fm, synth-impact, separate, eval, train-toy-prior, ablate.
Config layering is defaults < --config file < flags. Every run leaves an
artifact directory with a config snapshot, a deterministic JSONL run log,
parameter checkpoints, WAVs, dB spectrogram PNGs (initial vs final), and
metric CSVs. Exit codes: 0 ok, 2 config error, 3 backend error, 4
numeric abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import configs, paramio
from .errors import (
    CapabilityError,
    ConfigurationError,
    FormatError,
    InvalidInputError,
    NumericOverflowError,
    ProtocolError,
    TrainingError,
    TransportError,
)
from .metrics import build_separation_report, si_sdr
from .optimize import OptimizerSettings, SynthesisTask, optimize_synthesis
from .prior import Conditioning, OracleBackend, ToyPriorBackend
from .prior.toy import (
    CorpusSpec,
    SignalClassSpec,
    ToyPriorCheckpoint,
    TrainingConfig,
    generate_item,
    train_toy_prior,
    two_band_corpus,
)
from .render import (
    FMRenderer,
    ImpactRenderer,
    RenderSpec,
    init_impact_params,
)
from .render.fm import default_fm_params
from .sds import SDSConfig
from .separation import (
    SeparationProblem,
    SourceSpec,
    baseline_assignment,
    optimize_separation,
)
from .spectrogram import SpectrogramConfig, multiscale_spectrogram, spectral_recon_loss, spectrogram_to_csv
from .waveform import Waveform
from .wavio import wav_read, wav_write

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_NUMERIC = 4

ENV_BRIDGE = "AUDIOSDS_BRIDGE_ADDR"
ENV_CLAP = "AUDIOSDS_CLAP_URL"


def traffic_sax_corpus(sample_rate=8000, duration=1.0, seed=0) -> CorpusSpec:
    """Bundled synthetic two-source fixture: low rumble vs mid-band tone bed."""
    f = sample_rate / 8000.0
    return CorpusSpec(
        classes=(
            SignalClassSpec("traffic", "band_noise", 60.0 * f, 350.0 * f),
            SignalClassSpec("sax", "band_noise", 800.0 * f, 1800.0 * f),
        ),
        sample_rate=sample_rate,
        duration=duration,
        seed=seed,
    )


CORPUS_PRESETS = {"two-band": two_band_corpus, "traffic-sax": traffic_sax_corpus}


# -- artifact directory ---------------------------------------------------------


class RunDir:
    def __init__(self, out):
        self.root = Path(out)
        for sub in ("checkpoints", "audio", "spectrograms"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def snapshot_config(self, cfg: dict):
        with open(self.root / "config.json", "w") as fh:
            json.dump(cfg, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_log(self, records):
        with open(self.root / "run.log", "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def write_meta(self, **meta):
        with open(self.root / "meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    def save_checkpoint(self, step, params):
        paramio.save_params(
            params, self.root / "checkpoints" / f"step_{step:06d}.txt"
        )

    def save_wav(self, name, w: Waveform):
        wav_write(w, self.root / "audio" / f"{name}.wav", bit_depth=32)

    def save_spectrogram_pair(self, name, before, after):
        from .viz import spectrogram_pair_png

        window = min(1024, 1 << max(2, int(np.log2(before.num_samples / 4))))
        spectrogram_pair_png(
            before, after, self.root / "spectrograms" / f"{name}.png", window=window
        )

    def save_spectrogram_csv(self, name, w: Waveform, window_sizes):
        stack = multiscale_spectrogram(
            w, SpectrogramConfig(window_sizes=tuple(window_sizes))
        )
        spectrogram_to_csv(stack, self.root / "spectrograms" / name)


# -- config assembly -------------------------------------------------------------


def _load_file_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file is not valid JSON: {exc}")


def resolve_config(args) -> dict:
    flag_keys = (
        "seed", "backend", "checkpoint", "bridge_addr", "steps", "lr",
        "batch_size", "guidance_scale", "t_min", "t_max", "n_denoise_steps",
        "duration", "sample_rate", "gamma", "prompt", "prompts", "mixture",
        "fixture", "parametrization", "operators", "modes", "ablation",
        "k", "window_sizes", "auto_prompts",
    )
    overrides = {k: getattr(args, k, None) for k in flag_keys}
    cfg = configs.layered_config(args.task, _load_file_config(args.config), overrides)
    cfg["task"] = args.task
    cfg.setdefault("seed", 0)
    cfg.setdefault("backend", "toy")
    cfg.setdefault("fixture", None)
    cfg.setdefault("checkpoint", None)
    cfg.setdefault("bridge_addr", os.environ.get(ENV_BRIDGE) or None)
    return cfg


def validate_config(cfg: dict) -> list:
    problems = []
    task = cfg["task"]
    if task in ("synth-fm", "synth-impact", "separate"):
        if cfg.get("backend") not in ("toy", "bridge", "oracle"):
            problems.append(f"unknown backend {cfg.get('backend')!r}")
        if cfg.get("backend") == "toy" and not cfg.get("checkpoint"):
            problems.append("toy backend needs --checkpoint (train-toy-prior first)")
        if cfg.get("backend") == "bridge" and not cfg.get("bridge_addr"):
            problems.append(f"bridge backend needs --bridge-addr or ${ENV_BRIDGE}")
        n = cfg.get("duration", 0) * cfg.get("sample_rate", 0)
        if abs(n - round(n)) > 1e-9 or n <= 0:
            problems.append(
                f"duration * sample_rate must be a positive integer, got {n}"
            )
        if not (0 <= cfg.get("t_min", 0) < cfg.get("t_max", 1) <= 1):
            problems.append(
                f"need 0 <= t_min < t_max <= 1, got [{cfg.get('t_min')}, {cfg.get('t_max')}]"
            )
    if task == "separate":
        if not cfg.get("mixture") and not cfg.get("fixture"):
            problems.append("separate needs --mixture WAV or --fixture NAME")
        if cfg.get("mixture") and not Path(cfg["mixture"]).exists():
            problems.append(f"mixture path does not exist: {cfg['mixture']}")
        if cfg.get("fixture") and cfg["fixture"] not in CORPUS_PRESETS:
            problems.append(
                f"unknown fixture {cfg['fixture']!r}; have {sorted(CORPUS_PRESETS)}"
            )
        if cfg.get("mixture") and not cfg.get("prompts") and not cfg.get("auto_prompts"):
            problems.append("separate on a mixture file needs --prompts or --auto-prompts")
        if cfg.get("gamma", 0.02) <= 0:
            problems.append("gamma must be positive")
    if task == "ablate":
        ablation = cfg.get("ablation")
        if ablation not in ("spectrogram-l2", "multistep", "encoder-decoder"):
            problems.append(
                "ablate needs --ablation {spectrogram-l2,multistep,encoder-decoder}"
            )
        if ablation in ("multistep", "encoder-decoder"):
            if cfg.get("backend") not in ("toy", "bridge", "oracle"):
                problems.append(f"unknown backend {cfg.get('backend')!r}")
            if cfg.get("backend") == "toy" and not cfg.get("checkpoint"):
                problems.append(
                    "toy backend needs --checkpoint (train-toy-prior first)"
                )
            if cfg.get("backend") == "bridge" and not cfg.get("bridge_addr"):
                problems.append(
                    f"bridge backend needs --bridge-addr or ${ENV_BRIDGE}"
                )
    return problems


def build_backend(cfg: dict):
    kind = cfg.get("backend", "toy")
    if kind == "oracle":
        return OracleBackend(sample_rate=int(cfg.get("sample_rate", 44100)))
    if kind == "toy":
        backend = ToyPriorBackend(ToyPriorCheckpoint.load(cfg["checkpoint"]))
        sr = int(cfg.get("sample_rate", backend.sample_rate))
        if backend.sample_rate != sr:
            raise ConfigurationError(
                f"toy checkpoint was trained at {backend.sample_rate} Hz but the "
                f"run asks for {sr} Hz; pass --sample-rate {backend.sample_rate}"
            )
        return backend
    from .prior.wire import BridgeBackend

    return BridgeBackend(cfg["bridge_addr"])


def conditioning_from(prompt):
    if prompt is None:
        return None
    text = str(prompt).strip()
    if text.lstrip("-").isdigit():
        return Conditioning(class_id=int(text))
    return Conditioning(prompt=text)


# -- task runners -----------------------------------------------------------------


def run_train_toy_prior(cfg, rundir: RunDir) -> int:
    preset = cfg.get("corpus") or "two-band"
    if preset in CORPUS_PRESETS:
        corpus = CORPUS_PRESETS[preset](
            sample_rate=int(cfg.get("sample_rate") or 8000),
            duration=float(cfg.get("duration") or 1.0),
            seed=int(cfg["seed"]),
        )
    else:
        with open(preset) as fh:
            corpus = CorpusSpec.from_json(json.load(fh))
    train_cfg = TrainingConfig(
        steps=int(cfg.get("steps") or 2000),
        seed=int(cfg["seed"]),
        codec=cfg.get("codec", "conv"),
    )
    ckpt = train_toy_prior(corpus, train_cfg)
    out = rundir.root / "toy_prior.ckpt"
    ckpt.save(out)
    records = [
        {"step": int(s), "loss": float(l)} for s, l in ckpt.meta["loss_curve"]
    ]
    rundir.write_log(records)
    from .viz import loss_curve_png

    loss_curve_png(records, "loss", rundir.root / "loss_curve.png", "denoising MSE")
    print(f"checkpoint: {out} (hash {ckpt.content_hash()[:16]})")
    return EXIT_OK


def _synthesis_pieces(cfg, backend):
    sr = int(cfg["sample_rate"])
    spec = RenderSpec(float(cfg["duration"]), sr)
    seed = int(cfg["seed"])
    if cfg["task"] == "synth-fm":
        renderer = FMRenderer(spec)
        params = default_fm_params(int(cfg.get("operators") or 4), seed=seed)
    else:
        renderer = ImpactRenderer(spec)
        nyq = sr / 2.0
        hi = min(float(cfg.get("freq_init_hi_hz", 18000.0)), 0.9 * nyq)
        params = init_impact_params(
            int(cfg.get("modes") or 2048), sr, seed=seed,
            f_lo_hz=min(float(cfg.get("freq_init_lo_hz", 100.0)), hi / 4), f_hi_hz=hi,
        )
    return renderer, params


def _sds_config(cfg, variant=None) -> SDSConfig:
    windows = cfg.get("window_sizes") or [1024, 2048, 4096]
    return SDSConfig(
        t_min=float(cfg["t_min"]),
        t_max=float(cfg["t_max"]),
        guidance_scale=float(cfg["guidance_scale"]),
        batch_size=int(cfg["batch_size"]),
        n_denoise_steps=int(cfg["n_denoise_steps"]),
        update_variant=variant or cfg.get("update_variant", "decoder"),
        spectrogram=SpectrogramConfig(window_sizes=tuple(int(w) for w in windows)),
        seed=int(cfg["seed"]),
    )


def run_synthesis(cfg, rundir: RunDir) -> int:
    backend = build_backend(cfg)
    renderer, params = _synthesis_pieces(cfg, backend)
    task = SynthesisTask(
        renderer=renderer,
        initial_params=params,
        prior=backend,
        conditioning=conditioning_from(cfg.get("prompt")),
        sds=_sds_config(cfg),
        optimizer=OptimizerSettings(
            lr=float(cfg["lr"]), steps=int(cfg["steps"]),
            checkpoint_every=max(1, int(cfg["steps"]) // 5),
        ),
        name=cfg["task"],
    )
    init_render = renderer.render(params)
    traj = optimize_synthesis(task)
    final_render = traj.final_renders[0]

    rundir.write_log(traj.records)
    for step, vec in traj.checkpoints:
        rundir.save_checkpoint(step, renderer.params_from_vector(vec, like=params))
    rundir.save_wav("initial", init_render)
    rundir.save_wav("final", final_render)
    rundir.save_spectrogram_pair("initial_vs_final", init_render, final_render)
    rundir.save_spectrogram_csv("final", final_render, [min(1024, init_render.num_samples)])
    from .viz import loss_curve_png

    if traj.records:
        loss_curve_png(traj.records, "mean_residual", rundir.root / "residual.png",
                       "mean SDS residual")
    if traj.aborted:
        print(f"aborted: {traj.abort_reason} (last good checkpoint kept)")
        return EXIT_NUMERIC
    return EXIT_OK


def _fixture_problem_inputs(cfg):
    """Mixture plus ground-truth sources from a bundled synthetic corpus."""
    corpus = CORPUS_PRESETS[cfg["fixture"]](
        sample_rate=int(cfg["sample_rate"]),
        duration=float(cfg["duration"]),
        seed=int(cfg["seed"]),
    )
    item = 10_000 + int(cfg["seed"])  # far outside any training index range
    refs = [generate_item(corpus, k, item) for k in range(len(corpus.classes))]
    mixture = refs[0]
    for r in refs[1:]:
        mixture = mixture + r
    prompts = list(corpus.class_names())
    return mixture, refs, prompts


def _auto_prompts(mixture: Waveform, k: int) -> list:
    """Caption the mixture and ask the LLM for a K-way prompt decomposition."""
    from .prompts import caption, client_from_env, suggest_decompositions

    caption_client = client_from_env("AUDIOSDS_CAPTION_URL")
    llm_client = client_from_env("AUDIOSDS_LLM_URL")
    missing = [name for name, c in (("AUDIOSDS_CAPTION_URL", caption_client),
                                    ("AUDIOSDS_LLM_URL", llm_client)) if c is None]
    if missing:
        raise ConfigurationError("--auto-prompts needs env vars", problems=missing)
    text = caption(mixture, caption_client)
    proposals = suggest_decompositions(text, [k], llm_client)
    chosen = proposals[0]
    print(f"caption: {text}")
    print(f"auto prompts (K={k}): {chosen.prompts}")
    return chosen.prompts


def run_separation(cfg, rundir: RunDir) -> int:
    backend = build_backend(cfg)
    references = None
    if cfg.get("fixture"):
        mixture, references, prompts = _fixture_problem_inputs(cfg)
    else:
        mixture = wav_read(cfg["mixture"])
        if cfg.get("auto_prompts"):
            prompts = _auto_prompts(mixture, int(cfg.get("k") or 2))
        else:
            prompts = [p.strip() for p in str(cfg["prompts"]).split(",") if p.strip()]

    problem = SeparationProblem(
        mixture=mixture,
        sources=[
            SourceSpec(
                conditioning=conditioning_from(p),
                parametrization=cfg.get("parametrization", "latent"),
                seed=int(cfg["seed"]) * 1000 + k,
                name=str(p),
            )
            for k, p in enumerate(prompts)
        ],
        prior=backend,
        gamma=float(cfg["gamma"]),
        sds=_sds_config(cfg, variant="spec_decoder"),
        spectrogram=SpectrogramConfig(
            window_sizes=tuple(int(w) for w in (cfg.get("window_sizes") or [1024, 2048, 4096]))
        ),
        optimizer=OptimizerSettings(
            lr=float(cfg["lr"]), steps=int(cfg["steps"]),
            checkpoint_every=max(1, int(cfg["steps"]) // 5),
        ),
    )

    baseline = baseline_assignment(mixture, len(prompts))
    init_thetas = problem.initial_thetas()
    renderers = problem.renderers()
    init_renders = [r.render(t) for r, t in zip(renderers, init_thetas)]

    traj = optimize_separation(problem)
    finals = traj.final_renders
    recon = finals[0]
    for w in finals[1:]:
        recon = recon + w

    rundir.write_log(traj.records)
    with open(rundir.root / "steps.csv", "w") as fh:
        fh.write("step,rec_loss,mixture_sdr\n")
        for r in traj.records:
            fh.write(f"{r['step']},{r['rec_loss']},{r['mixture_sdr']}\n")
    for step, vecs in traj.checkpoints:
        for k, vec in enumerate(vecs):
            paramio.save_params(
                renderers[k].params_from_vector(vec, like=init_thetas[k]),
                rundir.root / "checkpoints" / f"step_{step:06d}_source{k}.txt",
            )
    rundir.save_wav("mixture", mixture)
    rundir.save_wav("mixture_reconstruction", recon)
    for k, (before, after) in enumerate(zip(init_renders, finals)):
        rundir.save_wav(f"source{k}_initial", before)
        rundir.save_wav(f"source{k}_final", after)
        rundir.save_spectrogram_pair(f"source{k}", before, after)

    rows = []
    report_final = build_separation_report(
        mixture, finals, references=references, prompts=prompts,
        mixture_id=cfg.get("fixture") or Path(str(cfg.get("mixture"))).stem,
        run_id="final",
    )
    rows.extend(report_final.rows)
    report_base = build_separation_report(
        mixture, baseline, references=references, prompts=prompts,
        mixture_id=cfg.get("fixture") or Path(str(cfg.get("mixture"))).stem,
        run_id="baseline",
    )
    rows.extend(report_base.rows)
    report_final.rows = rows
    report_final.to_csv(rundir.root / "metrics.csv")

    if references is not None:
        final_mean = np.mean([
            r.sdr_db for r in rows
            if r.run_id == "final" and r.source_index >= 0 and r.window == "full"
        ])
        base_mean = np.mean([
            r.sdr_db for r in rows
            if r.run_id == "baseline" and r.source_index >= 0 and r.window == "full"
        ])
        print(f"mean source SI-SDR: baseline {base_mean:.2f} dB -> final {final_mean:.2f} dB")
    print(f"mixture reconstruction SI-SDR: {si_sdr(mixture, recon):.2f} dB")
    if traj.aborted:
        print(f"aborted: {traj.abort_reason}")
        return EXIT_NUMERIC
    return EXIT_OK


def run_eval(cfg, rundir: RunDir) -> int:
    mixture = wav_read(cfg["mixture"])
    estimates = [wav_read(p) for p in cfg["estimates"]]
    references = [wav_read(p) for p in cfg["references"]] if cfg.get("references") else None
    prompts = (
        [p.strip() for p in str(cfg["prompts"]).split(",")] if cfg.get("prompts") else None
    )
    clap_client = None
    url = os.environ.get(ENV_CLAP, "").strip()
    if url:
        from .prompts import HttpTextClient

        clap_client = HttpTextClient(url)
    report = build_separation_report(
        mixture, estimates, references=references, prompts=prompts,
        clap_client=clap_client, mixture_id=Path(cfg["mixture"]).stem,
        run_id="eval",
    )
    print(report.to_csv(rundir.root / "metrics.csv"))
    return EXIT_OK


# -- ablations ---------------------------------------------------------------------


def _fit_impact_to_target(spec, target, init_params, loss_kind, steps, lr, seed):
    """Shared arm runner for the emphasis ablation: Adam fit to a fixed target."""
    renderer = ImpactRenderer(spec)
    scfg = SpectrogramConfig(window_sizes=(64, 256))
    from .optimize import VectorOptimizer

    opt = VectorOptimizer(renderer.params_to_vector(init_params).size,
                          OptimizerSettings(lr=lr, steps=steps))
    params = init_params.copy()
    vec = renderer.params_to_vector(params)
    records = []
    for step in range(steps):
        x = renderer.render(params)
        if loss_kind == "l2":
            diff = x.samples - target.samples
            loss = float(np.sum(diff * diff))
            grad = renderer.vjp(params, Waveform(2.0 * diff, x.sample_rate))
        else:
            loss, gwave = spectral_recon_loss(target, x, scfg)
            grad = renderer.vjp(params, gwave)
        vec = opt.step(vec, renderer.params_to_vector(grad))
        params = renderer.project(renderer.params_from_vector(vec, like=params))
        vec = renderer.params_to_vector(params)
        records.append({"step": step, "loss": loss, "arm": loss_kind})
    x = renderer.render(params)
    final_spec = spectral_recon_loss(target, x, scfg)[0]
    final_l2 = float(np.sum((x.samples - target.samples) ** 2))
    return params, x, records, final_spec, final_l2


def run_ablate(cfg, rundir: RunDir) -> int:
    kind = cfg["ablation"]
    seed = int(cfg["seed"])
    results = []
    if kind == "spectrogram-l2":
        sr = 8000
        spec = RenderSpec(2048 / sr, sr)
        target_params = init_impact_params(6, sr, seed=seed + 100, f_lo_hz=200,
                                           f_hi_hz=2500)
        target = ImpactRenderer(spec).render(target_params)
        init = init_impact_params(6, sr, seed=seed, f_lo_hz=150, f_hi_hz=3000)
        for arm in ("l2", "spec"):
            _, render, records, fs, fl = _fit_impact_to_target(
                spec, target, init, arm, steps=int(cfg.get("steps") or 150),
                lr=float(cfg.get("lr") or 2e-2), seed=seed,
            )
            results.append({"arm": arm, "final_spectral_loss": fs, "final_l2_loss": fl})
            rundir.save_wav(f"{arm}_final", render)
            rundir.save_spectrogram_pair(f"{arm}_target_vs_final", target, render)
        rundir.save_wav("target", target)
    elif kind == "multistep":
        for arm_steps in (1, 5):
            arm_cfg = configs.layered_config(
                "separate", None,
                {k: v for k, v in cfg.items() if k not in ("task", "ablation")},
            )
            arm_cfg.update(
                n_denoise_steps=arm_steps, fixture=cfg.get("fixture") or "two-band",
                task="separate",
            )
            arm_dir = RunDir(rundir.root / f"steps_{arm_steps}")
            arm_dir.snapshot_config(arm_cfg)
            code = run_separation(arm_cfg, arm_dir)
            if code != EXIT_OK:
                return code
            last = json.loads(
                (arm_dir.root / "run.log").read_text().strip().split("\n")[-1]
            )
            # the tracked objective: spectral distance of each recovered
            # source to its ground truth (the mixture itself is matched by
            # construction in both arms)
            _, refs, _ = _fixture_problem_inputs(arm_cfg)
            scfg = SpectrogramConfig(window_sizes=tuple(
                int(w) for w in (arm_cfg.get("window_sizes") or [1024, 2048, 4096])
            ))
            dists = []
            for k, ref in enumerate(refs):
                est = wav_read(arm_dir.root / "audio" / f"source{k}_final.wav")
                dists.append(spectral_recon_loss(ref, est, scfg)[0])
            results.append({
                "arm": f"steps_{arm_steps}",
                "final_source_spec_dist": float(np.mean(dists)),
                "final_rec_loss": last["rec_loss"],
                "final_mixture_sdr": last["mixture_sdr"],
            })
    else:  # encoder-decoder
        backend = build_backend(cfg)
        if not backend.has_encode_vjp:
            raise CapabilityError(
                "the encoder-update arm needs an encoder VJP, which the active "
                "backend does not expose"
            )
        for arm in ("classic", "decoder"):
            arm_cfg = configs.layered_config(
                "synth-impact", None,
                {k: v for k, v in cfg.items() if k not in ("task", "ablation")},
            )
            arm_cfg["update_variant"] = arm
            renderer, params = _synthesis_pieces({**arm_cfg, "task": "synth-impact"},
                                                 backend)
            task = SynthesisTask(
                renderer=renderer, initial_params=params, prior=backend,
                conditioning=conditioning_from(cfg.get("prompt")),
                sds=_sds_config(arm_cfg, variant=arm),
                optimizer=OptimizerSettings(
                    lr=float(cfg.get("lr") or 5e-3), steps=int(cfg.get("steps") or 50),
                ),
                name=f"ablate-{arm}",
            )
            init_render = renderer.render(params)
            traj = optimize_synthesis(task)
            rundir.save_spectrogram_pair(f"{arm}_initial_vs_final", init_render,
                                         traj.final_renders[0])
            results.append({
                "arm": arm,
                "final_mean_residual": traj.records[-1]["mean_residual"]
                if traj.records else float("nan"),
                "aborted": traj.aborted,
            })

    keys = sorted({k for r in results for k in r})
    with open(rundir.root / "ablation.csv", "w") as fh:
        fh.write(",".join(keys) + "\n")
        for r in results:
            fh.write(",".join(str(r.get(k, "")) for k in keys) + "\n")
    print(json.dumps(results, indent=2, sort_keys=True))
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="audiosds",
        description="Distill a text-conditioned audio diffusion prior into "
                    "parametric audio representations.",
    )
    sub = parser.add_subparsers(dest="task", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (overrides defaults)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True, help="artifact directory")
        p.add_argument("--backend", choices=("toy", "bridge", "oracle"), default=None)
        p.add_argument("--checkpoint", help="toy prior checkpoint path")
        p.add_argument("--bridge-addr", dest="bridge_addr",
                       help=f"HOST:PORT (or ${ENV_BRIDGE})")
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--guidance-scale", dest="guidance_scale", type=float,
                       default=None)
        p.add_argument("--t-min", dest="t_min", type=float, default=None)
        p.add_argument("--t-max", dest="t_max", type=float, default=None)
        p.add_argument("--denoise-steps", dest="n_denoise_steps", type=int,
                       default=None)
        p.add_argument("--duration", type=float, default=None)
        p.add_argument("--sample-rate", dest="sample_rate", type=int, default=None)
        p.add_argument("--window-sizes", dest="window_sizes",
                       type=lambda s: [int(x) for x in s.split(",")],
                       default=None, help="comma-separated STFT windows")

    p = sub.add_parser("synth-fm", help="tune the FM synthesizer against the prior")
    common(p)
    p.add_argument("--prompt", help="text prompt or toy class id/name")
    p.add_argument("--operators", type=int, default=None)

    p = sub.add_parser("synth-impact", help="tune the impact model against the prior")
    common(p)
    p.add_argument("--prompt")
    p.add_argument("--modes", type=int, default=None)

    p = sub.add_parser("separate", help="prompt-guided source separation")
    common(p)
    p.add_argument("--mixture", help="mixture WAV path")
    p.add_argument("--fixture", choices=sorted(CORPUS_PRESETS),
                   help="bundled synthetic fixture instead of --mixture")
    p.add_argument("--prompts", help="comma-separated per-source prompts")
    p.add_argument("--auto-prompts", dest="auto_prompts", action="store_true",
                   default=None,
                   help="derive prompts via $AUDIOSDS_CAPTION_URL + $AUDIOSDS_LLM_URL")
    p.add_argument("--k", type=int, default=None, help="source count for --auto-prompts")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--parametrization", choices=("latent", "waveform"), default=None)

    p = sub.add_parser("eval", help="metric report for existing estimates")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--mixture", required=True)
    p.add_argument("--estimates", nargs="+", required=True)
    p.add_argument("--references", nargs="*")
    p.add_argument("--prompts")

    p = sub.add_parser("train-toy-prior", help="train the built-in prior")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--corpus", default="two-band",
                   help=f"preset {sorted(CORPUS_PRESETS)} or a corpus JSON path")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--codec", choices=("conv", "identity"), default="conv")
    p.add_argument("--sample-rate", dest="sample_rate", type=int, default=None)
    p.add_argument("--duration", type=float, default=None)

    p = sub.add_parser("ablate", help="matched-seed design ablations")
    common(p)
    p.add_argument("--ablation", choices=("spectrogram-l2", "multistep",
                                          "encoder-decoder"))
    p.add_argument("--fixture", choices=sorted(CORPUS_PRESETS))
    p.add_argument("--prompt")
    p.add_argument("--modes", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--parametrization", choices=("latent", "waveform"), default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        if args.task == "eval":
            cfg = {
                "task": "eval",
                "mixture": args.mixture,
                "estimates": args.estimates,
                "references": args.references,
                "prompts": args.prompts,
                "seed": args.seed or 0,
            }
            problems = [] if Path(args.mixture).exists() else [
                f"mixture path does not exist: {args.mixture}"
            ]
            problems += [f"estimate path does not exist: {p}"
                         for p in args.estimates if not Path(p).exists()]
            problems += [f"reference path does not exist: {p}"
                         for p in (args.references or []) if not Path(p).exists()]
        elif args.task == "train-toy-prior":
            cfg = {
                "task": "train-toy-prior",
                "seed": args.seed,
                "corpus": args.corpus,
                "steps": args.steps,
                "codec": args.codec,
                "sample_rate": args.sample_rate,
                "duration": args.duration,
            }
            problems = []
            if args.corpus not in CORPUS_PRESETS and not Path(args.corpus).exists():
                problems.append(f"corpus preset or file not found: {args.corpus}")
        else:
            cfg = resolve_config(args)
            problems = validate_config(cfg)
        if problems:
            for msg in problems:
                print(f"config error: {msg}", file=sys.stderr)
            return EXIT_CONFIG

        rundir = RunDir(args.out)
        rundir.snapshot_config(cfg)
        if args.task in ("synth-fm", "synth-impact"):
            code = run_synthesis(cfg, rundir)
        elif args.task == "separate":
            code = run_separation(cfg, rundir)
        elif args.task == "eval":
            code = run_eval(cfg, rundir)
        elif args.task == "train-toy-prior":
            code = run_train_toy_prior(cfg, rundir)
        else:
            code = run_ablate(cfg, rundir)
        rundir.write_meta(elapsed_seconds=time.time() - started, exit_code=code)
        return code
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TransportError, ProtocolError, CapabilityError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (NumericOverflowError, TrainingError) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, InvalidInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
