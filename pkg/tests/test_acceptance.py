"""Acceptance criteria; each test prints one PASS/FAIL line (collected in the
terminal summary) before asserting.

The slow campaigns here run at full size: 100 seeds per classifier, 5 x 100
leave-one-out transfer runs and 100 paired timing trials. Expect roughly
40 minutes on one CPU core.
"""

import time

import numpy as np
import pytest
import torch
from conftest import report

from advface import desk, faces
from advface.attacks import (
    AttackConfig,
    ImageGuidance,
    MetaConfig,
    attack_image_guided,
    attack_image_naive,
    fgsm,
    pgd,
    run_ensemble,
    run_image_guided,
    run_meta,
    run_text_guided,
)
from advface.evaluation import attack_success_rate, fid, leave_one_out_transfer
from advface.forensics import LinearClassifier
from advface.generator import row_mask, sample_initial, sample_initial_batch
from advface.losses import (
    ThumbnailIdentity,
    adversarial_bce,
    clip_distance,
    composite_objective,
    identity_loss,
    latent_reg,
    perceptual_loss,
)
from advface.reproduce import DESK_TEXT, reproduce

SEEDS = list(range(100))
PROMPT = "red hair"


def _fd_errors(f, inputs, n_dirs=3, h=1e-5, seed=0):
    """Relative errors between autograd and central differences along random directions."""
    g = torch.Generator().manual_seed(seed)
    xs = [x.detach().clone().requires_grad_(True) for x in inputs]
    grads = torch.autograd.grad(f(*xs), xs, allow_unused=True)
    grads = [torch.zeros_like(x) if gr is None else gr for x, gr in zip(xs, grads)]
    errs = []
    for _ in range(n_dirs):
        dirs = [torch.randn(x.shape, generator=g, dtype=x.dtype) for x in xs]
        analytic = sum(float((gr * d).sum()) for gr, d in zip(grads, dirs))
        with torch.no_grad():
            up = float(f(*[x + h * d for x, d in zip(xs, dirs)]))
            down = float(f(*[x - h * d for x, d in zip(xs, dirs)]))
        numeric = (up - down) / (2 * h)
        errs.append(abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-12))
    return errs


def test_gradient_fidelity(gen64, zoo64, phi64, emb64):
    t0 = time.perf_counter()
    clf = zoo64["dense"]
    x = torch.from_numpy(faces.real_faces(2, seed=11)[0]).double()
    ref = torch.from_numpy(faces.real_faces(1, seed=12)[0][0]).double()
    w0, n0 = sample_initial(gen64, 5)
    w0 = w0 + 0.1 * torch.randn(w0.shape, generator=torch.Generator().manual_seed(1), dtype=torch.float64)
    mask = row_mask("fine", gen64.layer_count)[:, None]
    idn = ThumbnailIdentity()
    lam1, lam2 = 0.002, 0.005

    def image_objective(w, *noise):
        img = gen64.synthesis(torch.where(mask, w, w0)[None], [n[None] for n in noise])[0]
        return composite_objective([(1.0, lambda: perceptual_loss(img, ref, phi64)),
                                    (lam1, lambda: latent_reg(torch.where(mask, w, w0), w0)),
                                    (lam2, lambda: adversarial_bce(clf, img))])

    def text_objective(w, *noise):
        img = gen64.synthesis(w[None], [n[None] for n in noise])[0]
        start = gen64.synthesis(w0[None], [n[None] for n in n0])[0]
        return composite_objective([(1.0, lambda: clip_distance(img, PROMPT, emb64)),
                                    (0.01, lambda: latent_reg(w, w0)),
                                    (lam2, lambda: adversarial_bce(clf, img)),
                                    (0.05, lambda: identity_loss(img, start, idn))])

    checks = {
        "perceptual": _fd_errors(lambda a: perceptual_loss(a, ref.expand(2, -1, -1, -1), phi64).sum(), [x]),
        "latent_reg": _fd_errors(lambda w: latent_reg(w, w0), [w0 + 0.3]),
        "adversarial_bce": _fd_errors(lambda a: adversarial_bce(clf, a).sum(), [x]),
        "clip_distance": _fd_errors(lambda a: clip_distance(a, PROMPT, emb64).sum(), [x]),
        "identity": _fd_errors(lambda a: identity_loss(a, x.flip(0), idn).sum(), [x]),
        "image composite": _fd_errors(image_objective, [w0, *n0]),
        "text composite": _fd_errors(text_objective, [w0, *n0]),
    }
    elapsed = time.perf_counter() - t0
    worst = {k: max(v) for k, v in checks.items()}
    ok = all(v <= 1e-4 for v in worst.values()) and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert report("gradient fidelity", ok, f"max rel err {detail}; {elapsed:.1f} s (< 60 s)")


def test_masking_invariant(gen, zoo, phi):
    rng = np.random.default_rng(2024)
    ids = sorted(zoo)
    violations, runs = {}, {}
    for group in ("coarse", "middle", "fine"):
        keep = ~row_mask(group, gen.layer_count)
        violations[group], runs[group] = 0, 0
        for _ in range(10):
            seeds = rng.integers(0, 10**6, size=10).tolist()
            refs = torch.from_numpy(faces.real_faces(10, seed=int(rng.integers(10**6)))[0])
            cfg = AttackConfig.image_guided(group=group, learning_rate=float(rng.uniform(0.005, 0.1)),
                                            max_iters=int(rng.integers(1, 25)),
                                            optimize_noise=bool(rng.integers(2)))
            clf = zoo[ids[int(rng.integers(len(ids)))]]
            for res in run_image_guided(gen, clf, refs, cfg, phi, seeds):
                runs[group] += 1
                violations[group] += not torch.equal(res.final_latent[keep], res.start_latent[keep])
    ok = all(v == 0 for v in violations.values()) and all(n == 100 for n in runs.values())
    detail = ", ".join(f"{g} {violations[g]}/{runs[g]}" for g in violations)
    assert report("masking invariant", ok, f"violations {detail}")


def test_white_box_asr(gen, zoo, phi, emb):
    t0 = time.perf_counter()
    refs = torch.from_numpy(faces.real_faces(len(SEEDS), seed=777)[0])
    image_cfg = AttackConfig.image_guided()
    text_cfg = AttackConfig(**DESK_TEXT)
    asr = {}
    for cid, clf in zoo.items():
        res = run_image_guided(gen, clf, refs, image_cfg, phi, SEEDS)
        asr[("image", cid)] = attack_success_rate(res, cid)
        assert max(r.iterations_used for r in res) <= 200
        res = run_text_guided(gen, clf, PROMPT, text_cfg, emb, SEEDS)
        asr[("text", cid)] = attack_success_rate(res, cid)
    elapsed = time.perf_counter() - t0
    worst = min(asr.values())
    ok = worst >= 0.95 and elapsed < 600
    detail = " ".join(f"{k[0]}/{k[1]} {v:.2f}" for k, v in asr.items())
    assert report("white-box ASR", ok,
                  f"min {worst:.2f} (>= 0.95) over 100 seeds x {len(zoo)} classifiers; {elapsed:.0f} s (< 600 s); "
                  f"text at lr {text_cfg.learning_rate} / {text_cfg.max_iters} iters; {detail}")


def test_pixel_baselines(gen64, zoo64):
    g = torch.Generator().manual_seed(7)
    fgsm_exact = 0
    for _ in range(100):
        # small weights keep p above the 1e-7 floor, where the clamped BCE has a gradient
        w = 0.1 * torch.randn(3, 8, 8, generator=g, dtype=torch.float64)
        x = 0.2 + 0.6 * torch.rand(3, 8, 8, generator=g, dtype=torch.float64)
        eps = float(0.01 + 0.09 * torch.rand((), generator=g, dtype=torch.float64))
        fgsm_exact += torch.equal(fgsm(x, LinearClassifier(-w, bias=0.3), eps), x - eps * torch.sign(w))
    w_s, noise = sample_initial_batch(gen64, SEEDS)
    with torch.no_grad():
        clean = gen64.synthesis(w_s, noise)
    in_bounds, single_step = 0, 0
    ids = sorted(zoo64)
    for i in range(0, 100, 20):
        clf = zoo64[ids[(i // 20) % len(ids)]]
        x = clean[i : i + 20]
        adv = pgd(x, clf, eps=0.06, step=0.01, iters=50)
        linf = (adv - x).flatten(1).abs().max(dim=1).values
        in_range = (adv.flatten(1).min(dim=1).values >= 0) & (adv.flatten(1).max(dim=1).values <= 1)
        in_bounds += int(((linf <= 0.06 + 1e-12) & in_range).sum())
        one = pgd(x, clf, eps=0.03, step=0.03, iters=1)
        ref = fgsm(x, clf, eps=0.03)
        single_step += sum(torch.equal(a, b) for a, b in zip(one, ref))
    ok = fgsm_exact == 100 and in_bounds == 100 and single_step == 100
    assert report("pixel baselines", ok,
                  f"FGSM == oracle {fgsm_exact}/100; PGD within eps and [0,1] {in_bounds}/100; "
                  f"PGD(iters=1) == FGSM {single_step}/100")


def test_fid_oracle(phi):
    real = torch.from_numpy(faces.real_faces(300, seed=5)[0])
    self_fid = fid(real, real, phi)
    rng = np.random.default_rng(3)
    a = rng.normal(size=(500, 16))
    shift = rng.normal(size=16)
    d2 = float(shift @ shift)
    shifted = fid(a, a + shift)
    b = rng.normal(0.2, 1.3, size=(400, 16))
    asym = abs(fid(a, b) - fid(b, a))
    ok = self_fid <= 1e-6 and abs(shifted - d2) <= 1e-3 and asym <= 1e-8
    assert report("FID oracle", ok,
                  f"fid(A,A) {self_fid:.2e} (<= 1e-6); mean shift {shifted:.6f} vs d^2 {d2:.6f} (+-1e-3); "
                  f"asymmetry {asym:.1e} (<= 1e-8)")


def test_meta_vs_ensemble(gen, zoo, phi):
    t0 = time.perf_counter()
    pool = {k: zoo[k] for k in desk.TABLE4_POOL}
    cfg = AttackConfig.image_guided(group="fine", max_iters=30, stop_on_success=False)
    n = len(SEEDS)
    refs = torch.from_numpy(faces.real_faces(n, seed=777)[0])

    def ensemble(kept, seeds):
        return run_ensemble(gen, list(kept.values()), ImageGuidance(refs, phi), cfg, seeds)

    def meta(kept, seeds):
        return run_meta(gen, MetaConfig(list(kept.values()), inner_lr=50.0), ImageGuidance(refs, phi), cfg, seeds)

    table = leave_one_out_transfer(pool, {"ensemble": ensemble, "meta": meta}, n_seeds=n, repetitions=5)
    elapsed = time.perf_counter() - t0
    cols = table.columns()
    wins = sum(table.rows["meta"][c] >= table.rows["ensemble"][c] for c in cols)
    ok = wins >= 3 and elapsed < 1800
    detail = " ".join(f"{c} {table.rows['meta'][c]:.1f}/{table.rows['ensemble'][c]:.1f}" for c in cols)
    assert report("meta vs ensemble", ok,
                  f"meta >= ensemble on {wins}/5 held-out classifiers (>= 3); meta/ensemble % {detail}; "
                  f"5 reps x 100 seeds; {elapsed:.0f} s (< 1800 s)")


def test_naive_vs_proposed_timing(gen, zoo, phi):
    clf = zoo["dense"]
    refs = torch.from_numpy(faces.real_faces(len(SEEDS), seed=777)[0])
    wins, ok_prop, ok_naive, t_prop, t_naive = 0, 0, 0, [], []
    for s in SEEDS:
        cfg = AttackConfig.image_guided(group="fine", seed=s)
        prop = attack_image_guided(gen, clf, refs[s], cfg, phi)
        naive = attack_image_naive(gen, clf, refs[s], "fine", cfg, phi)
        wins += prop.wall_clock_seconds < naive.wall_clock_seconds
        ok_prop += prop.success
        ok_naive += naive.success
        t_prop.append(prop.wall_clock_seconds)
        t_naive.append(naive.wall_clock_seconds)
    ok = wins >= 95 and ok_prop >= 95 and ok_naive >= 95
    assert report("naive vs proposed timing", ok,
                  f"proposed faster in {wins}/100 pairs (>= 95); ASR proposed {ok_prop}% naive {ok_naive}% (>= 95); "
                  f"mean {np.mean(t_prop):.2f} s vs {np.mean(t_naive):.2f} s "
                  f"({np.mean(t_naive) / np.mean(t_prop):.1f}x)")


def test_text_alignment_and_identity(gen, zoo, emb):
    clf = zoo["dense"]
    cfg = AttackConfig(**DESK_TEXT)
    base = run_text_guided(gen, clf, PROMPT, cfg, emb, SEEDS)
    with_id = run_text_guided(gen, clf, PROMPT, AttackConfig(**DESK_TEXT, hyper={"lambda_id": 0.05}), emb, SEEDS)
    idn = ThumbnailIdentity()
    aligned, closer = 0, 0
    with torch.no_grad():
        for r0, r1 in zip(base, with_id):
            start = gen.synthesis(r0.start_latent[None], [n[None] for n in r0.start_noise])[0]
            aligned += float(clip_distance(r0.image, PROMPT, emb)) < float(clip_distance(start, PROMPT, emb))
            closer += float(identity_loss(r1.image, start, idn)) < float(identity_loss(r0.image, start, idn))
    ok = aligned >= 90 and closer >= 90
    assert report("text alignment and identity", ok,
                  f"alignment improved in {aligned}/100 (>= 90); lambda_id=0.05 closer to the start identity in "
                  f"{closer}/100 paired seeds (>= 90)")


def test_reproducibility(tmp_path):
    a = reproduce("table4", tmp_path / "a", n_seeds=10, repetitions=1)
    b = reproduce("table4", tmp_path / "b", n_seeds=10, repetitions=1)
    same = a["csv"].read_bytes() == b["csv"].read_bytes()
    assert report("reproducibility", same,
                  f"table4 CSV from two fresh roots byte-identical: {same} ({len(a['csv'].read_bytes())} bytes)")
