"""``nvloc`` command line: simulate, fit, locate, couple and render.

Exit codes: 0 success, 1 fit failure, 2 I/O or file-format error,
3 unstable inversion, 4 invalid input or usage.
"""

from __future__ import annotations

import functools
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import coupling, fileio, figures, fitting, locator
from .config import NM, UA, RunConfig
from .errors import (
    DataFormatError,
    FitError,
    InversionError,
    NVLocError,
    QuadratureError,
    UnstableInversionError,
    ValidationError,
)
from .wire_field import MODELS, field_magnitude_grid

EXIT_OK = 0
EXIT_FIT = 1
EXIT_IO = 2
EXIT_UNSTABLE = 3
EXIT_VALIDATION = 4


class CommandFailed(Exception):
    """Raised after a partial report has been written."""

    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _float_list(ctx, param, value):
    if value is None:
        return None
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}") from None


def common(func):
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON run configuration.")
    @click.option("--out-dir", type=click.Path(file_okay=False), help="Output directory (default: config out_dir).")
    @functools.wraps(func)
    def wrapper(config_path, out_dir, **kwargs):
        cfg = RunConfig.load(config_path)
        cfg.set("out_dir", out_dir)
        return func(cfg, **kwargs)

    return wrapper


def geometry_options(func):
    for opt in reversed(
        [
            click.option("--width-nm", type=float, help="Wire width."),
            click.option("--thickness-nm", type=float, help="Wire thickness."),
            click.option("--length-nm", type=float, help="Wire length (finite model)."),
            click.option("--model", type=click.Choice(MODELS), help="Field model."),
        ]
    ):
        func = opt(func)
    return func


def _apply_geometry(cfg, width_nm, thickness_nm, length_nm, model):
    cfg.set("wire.width_nm", width_nm).set("wire.thickness_nm", thickness_nm)
    cfg.set("wire.length_nm", length_nm).set("model", model)


def _out_dir(cfg):
    path = Path(cfg.get("out_dir"))
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc.strerror}") from exc
    return path


def _provenance(cfg, **extra):
    return {"config_hash": cfg.hash, "config": cfg.hashed_part(), **extra}


def _meta(cfg):
    return {"config_hash": cfg.hash}


@click.group()
@click.version_option(package_name="nvloc")
def cli():
    """Locate implanted NV centers from wire-current field measurements."""


# ---------------------------------------------------------------- fieldmap


@cli.command()
@common
@geometry_options
@click.option("--current-ua", type=float, help="Wire current (default 1000 uA).")
@click.option("--x-min-nm", type=float)
@click.option("--x-max-nm", type=float)
@click.option("--nx", type=int)
@click.option("--z-min-nm", type=float)
@click.option("--z-max-nm", type=float)
@click.option("--nz", type=int)
def fieldmap(cfg, width_nm, thickness_nm, length_nm, model, current_ua, **grid):
    """Field magnitude of the wire on an (x', z') grid: CSV and SVG heatmap."""
    _apply_geometry(cfg, width_nm, thickness_nm, length_nm, model)
    cfg.set("fieldmap.current_ua", current_ua)
    for key, value in grid.items():
        cfg.set(f"grid.{key}", value)
    out = _out_dir(cfg)
    g = cfg.geometry()
    fg = field_magnitude_grid(g, cfg.get("fieldmap.current_ua") * UA, cfg.grid(), cfg.get("model"))
    csv_path = fileio.write_csv(out / "fieldmap.csv", ("x_nm", "z_nm", "b_mt"), fg.rows(), _meta(cfg))
    svg_path = figures.field_map_svg(out / "fieldmap.svg", fg, g, description=_meta(cfg))
    click.echo(f"wrote {csv_path} and {svg_path}")


# ---------------------------------------------------------------- simulate


@cli.command()
@common
@click.argument("kind", type=click.Choice(["odmr", "nutation"]))
@click.option("--currents-ua", callback=_float_list, default="240,160,0,-160,-240", show_default=True)
@click.option("--alpha-z-mt-per-ma", type=float, default=1.4, show_default=True)
@click.option("--bz-offset-mt", type=float, default=0.6, show_default=True, help="Ambient field along the NV axis.")
@click.option("--alpha-perp-mt-per-ma", type=float, default=1.9, show_default=True)
@click.option("--bperp-offset-mt", type=float, default=0.0, show_default=True,
              help="Ambient transverse field, collinear with the wire's.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--linewidth-mhz", type=float)
@click.option("--contrast", type=float)
@click.option("--rate-kcps", type=float)
@click.option("--noise", type=float, help="Nutation noise std (fraction of population).")
def simulate(cfg, kind, currents_ua, alpha_z_mt_per_ma, bz_offset_mt, alpha_perp_mt_per_ma, bperp_offset_mt,
             seed, linewidth_mhz, contrast, rate_kcps, noise):
    """Write synthetic ODMR spectra or nuclear-oscillation traces, one CSV per current."""
    cfg.set("odmr.linewidth_mhz", linewidth_mhz).set("odmr.contrast", contrast).set("odmr.rate_kcps", rate_kcps)
    cfg.set("nutation.noise", noise)
    if not currents_ua:
        raise ValidationError("no currents given")
    out = _out_dir(cfg)
    c = cfg.spin_constants()
    o, nu = cfg.get("odmr"), cfg.get("nutation")
    truth = {
        "kind": kind,
        "currents_ua": currents_ua,
        "alpha_z_mt_per_ma": alpha_z_mt_per_ma,
        "bz_offset_mt": bz_offset_mt,
        "alpha_perp_mt_per_ma": alpha_perp_mt_per_ma,
        "bperp_offset_mt": bperp_offset_mt,
        "seed": seed,
    }
    meta = {**_meta(cfg), "seed": seed}
    written = []
    for k, i_ua in enumerate(currents_ua):
        i = i_ua * UA
        b_z = alpha_z_mt_per_ma * i + bz_offset_mt * 1e-3
        if kind == "odmr":
            s = fitting.synth_odmr(
                c, b_z, linewidth=o["linewidth_mhz"] * 1e6, contrast=o["contrast"], rate=o["rate_kcps"] * 1e3,
                integration=o["integration_s"], seed=[seed, k], current=i,
                frequencies=fitting.default_odmr_frequencies(c, o["half_span_mhz"] * 1e6, int(o["points"])),
            )
            path = fileio.write_odmr(out / f"odmr_{k:03d}.csv", s, meta)
        else:
            b_perp = abs(alpha_perp_mt_per_ma * i + bperp_offset_mt * 1e-3)
            delays = np.linspace(0.0, nu["max_delay_us"] * 1e-6, int(nu["points"]))
            t = fitting.synth_nutation(c, b_z, b_perp, noise=nu["noise"], seed=[seed, k], delays=delays, current=i)
            path = fileio.write_nutation(out / f"nutation_{k:03d}.csv", t, meta)
        written.append(path.name)
    fileio.write_json(out / f"{kind}_truth.json", _provenance(cfg, truth=truth, files=written))
    click.echo(f"wrote {len(written)} {kind} files to {out}")


# ---------------------------------------------------------------- fits


def _check_currents(files, what):
    if len(files) < 3:
        raise CommandFailed(f"{what} needs spectra at >= 3 distinct currents, got {len(files)} file(s)", EXIT_FIT)


def _failure(report, path, exc):
    report.append({"file": str(path), "ok": False, "error": f"{type(exc).__name__}: {exc}"})


@cli.command("fit-odmr")
@common
@click.argument("files", nargs=-1, type=click.Path(dir_okay=False))
@click.option("--line-model", type=click.Choice(["abs", "linear"]), default="abs", show_default=True,
              help="abs: fit |a i + b| to unsigned B_z; linear: signed line.")
def fit_odmr(cfg, files, line_model):
    """Fit four Gaussians per spectrum, convert to B_z and extract alpha_z."""
    _check_currents(files, "fit-odmr")
    out = _out_dir(cfg)
    c = cfg.spin_constants()
    spectra = [fileio.read_odmr(p) for p in files]
    if len({s.current for s in spectra}) < 3:
        raise CommandFailed("fit-odmr needs >= 3 distinct currents", EXIT_FIT)

    report, currents, bz, bz_err = [], [], [], []
    for path, s in zip(files, spectra):
        try:
            q = fitting.fit_four_gaussians(s, c)
            b, e = fitting.bz_from_centers(q, c), fitting.bz_error(q, c)
        except FitError as exc:
            _failure(report, path, exc)
            continue
        report.append({"file": str(path), "ok": True, "current_amp": s.current, "b_z_t": b, "b_z_err_t": e,
                       "fit": q.to_dict()})
        currents.append(s.current)
        bz.append(b)
        bz_err.append(e)

    result = _provenance(cfg, spectra=report)
    failed = [r["file"] for r in report if not r["ok"]]
    if not failed:
        try:
            fit = fitting.extract_alpha_z(currents, bz, bz_err, model=line_model)
        except FitError as exc:
            failed.append(f"alpha_z: {exc}")
        else:
            result.update(_line_result("alpha_z", fit))
            figures.line_fit_svg(
                out / "fit_odmr.svg", np.array(currents) / UA, np.array(bz) * 1e3, np.array(bz_err) * 1e3,
                lambda x: _line_curve(fit, x * UA) * 1e3, "i0 (uA)", "B_z (mT)", description=_meta(cfg),
            )
    result["ok"] = not failed
    fileio.write_json(out / "fit_odmr.json", result)
    if failed:
        raise CommandFailed(f"fit failed for: {', '.join(failed)}", EXIT_FIT)
    click.echo(f"alpha_z = {result['alpha_z_mt_per_ma']:.4g} +/- {result['alpha_z_err_mt_per_ma']:.2g} mT/mA")


def _line_result(name, fit):
    return {
        f"{name}_mt_per_ma": fit.slope,
        f"{name}_err_mt_per_ma": fit.slope_err,
        "intercept_mt": fit.intercept * 1e3,
        "intercept_err_mt": fit.intercept_err * 1e3,
        "line_fit": fit.to_dict(),
    }


def _line_curve(fit, i):
    y = fit(i)
    if fit.model == "abs":
        return np.abs(y)
    if fit.model == "signed":
        return np.sign(i) * y
    return y


def _bz_source(cfg, odmr_json, alpha_z, offset_mt):
    if odmr_json is not None:
        data = fileio.read_json(odmr_json)
        try:
            line = data["line_fit"]
        except (KeyError, TypeError):
            raise DataFormatError("no alpha_z line fit in file", path=odmr_json) from None
        a, b = float(line["slope"]), float(line["intercept"])
    elif alpha_z is not None:
        a, b = alpha_z, (offset_mt or 0.0) * 1e-3
    else:
        raise ValidationError("give --odmr-json or --alpha-z-mt-per-ma to set B_z per current")
    return lambda i: abs(a * i + b)


@cli.command("fit-nutation")
@common
@click.argument("files", nargs=-1, type=click.Path(dir_okay=False))
@click.option("--odmr-json", type=click.Path(dir_okay=False), help="fit-odmr result giving B_z per current.")
@click.option("--alpha-z-mt-per-ma", type=float, help="B_z slope, if no --odmr-json.")
@click.option("--bz-offset-mt", type=float, help="B_z intercept, if no --odmr-json.")
@click.option("--line-model", type=click.Choice(["signed", "abs", "linear"]), default="signed", show_default=True,
              help="signed: sign(i) B_perp vs i; abs: |a i + b| with collinear ambient field.")
def fit_nutation(cfg, files, odmr_json, alpha_z_mt_per_ma, bz_offset_mt, line_model):
    """Fit the oscillation frequency per trace, convert to B_perp and extract alpha_perp."""
    _check_currents(files, "fit-nutation")
    out = _out_dir(cfg)
    c = cfg.spin_constants()
    bz_of = _bz_source(cfg, odmr_json, alpha_z_mt_per_ma, bz_offset_mt)
    traces = [fileio.read_nutation(p) for p in files]
    if len({t.current for t in traces}) < 3:
        raise CommandFailed("fit-nutation needs >= 3 distinct currents", EXIT_FIT)

    report, currents, bp, bp_err = [], [], [], []
    for path, t in zip(files, traces):
        b_z = bz_of(t.current)
        try:
            fs = fitting.fit_sinusoid(t)
            b = fitting.bperp_from_omega(fs.frequency, b_z, c)
        except FitError as exc:
            _failure(report, path, exc)
            continue
        # dB/df = f / (gamma_perp^2 B)
        e = fs.frequency * fs.frequency_err / (c.gamma_I_perp**2 * b) if b > 0 else math.inf
        report.append({"file": str(path), "ok": True, "current_amp": t.current, "b_z_t": b_z, "b_perp_t": b,
                       "b_perp_err_t": e, "fit": fs.to_dict()})
        currents.append(t.current)
        bp.append(b)
        bp_err.append(e)

    result = _provenance(cfg, traces=report)
    failed = [r["file"] for r in report if not r["ok"]]
    if not failed:
        sigma = np.array(bp_err) if np.all(np.isfinite(bp_err)) else None
        try:
            fit = fitting.extract_alpha_perp(currents, bp, sigma, model=line_model)
        except FitError as exc:
            failed.append(f"alpha_perp: {exc}")
        else:
            result.update(_line_result("alpha_perp", fit))
            shown = np.array(bp) * (np.sign(currents) if line_model == "signed" else 1.0)
            figures.line_fit_svg(
                out / "fit_nutation.svg", np.array(currents) / UA, shown * 1e3, np.array(bp_err) * 1e3,
                lambda x: fit(x * UA) * 1e3 if line_model != "abs" else np.abs(fit(x * UA)) * 1e3,
                "i0 (uA)", "B_perp (mT)", description=_meta(cfg),
            )
    result["ok"] = not failed
    fileio.write_json(out / "fit_nutation.json", result)
    if failed:
        raise CommandFailed(f"fit failed for: {', '.join(failed)}", EXIT_FIT)
    click.echo(
        f"alpha_perp = {result['alpha_perp_mt_per_ma']:.4g} +/- {result['alpha_perp_err_mt_per_ma']:.2g} mT/mA"
    )


# ---------------------------------------------------------------- locate


def _alpha_from_json(cfg, paths):
    for path in paths:
        data = fileio.read_json(path)
        if not isinstance(data, dict):
            raise DataFormatError("expected a JSON object", path=path)
        for key in ("alpha_z_mt_per_ma", "alpha_perp_mt_per_ma"):
            if key in data:
                cfg.set(f"alpha.{key}", float(data[key]))
        if "alpha" in data and isinstance(data["alpha"], dict):
            for key, value in data["alpha"].items():
                cfg.set(f"alpha.{key}", value)


@cli.command()
@common
@geometry_options
@click.option("--alpha-json", multiple=True, type=click.Path(dir_okay=False),
              help="fit-odmr / fit-nutation result or any JSON with alpha_*_mt_per_ma keys.")
@click.option("--alpha-z-mt-per-ma", type=float)
@click.option("--alpha-perp-mt-per-ma", type=float)
@click.option("--sigma-alpha-mt-per-ma", type=float)
@click.option("--n", "n_samples", type=int, help="Bootstrap draws (default 5000).")
@click.option("--seed", type=int)
@click.option("--forward", type=click.Choice(MODELS), help="Field model used inside each fit.")
@click.option("--half-plane", type=click.Choice(["auto", "negative", "positive"]),
              help="Force the x' half-plane; auto follows the sign of alpha_z.")
def locate(cfg, width_nm, thickness_nm, length_nm, model, alpha_json, alpha_z_mt_per_ma, alpha_perp_mt_per_ma,
           sigma_alpha_mt_per_ma, n_samples, seed, forward, half_plane):
    """Bootstrap the NV position from alpha_z and alpha_perp: JSON, CSVs and an SVG overlay."""
    _apply_geometry(cfg, width_nm, thickness_nm, length_nm, model)
    _alpha_from_json(cfg, alpha_json)
    cfg.set("alpha.alpha_z_mt_per_ma", alpha_z_mt_per_ma).set("alpha.alpha_perp_mt_per_ma", alpha_perp_mt_per_ma)
    cfg.set("alpha.sigma_mt_per_ma", sigma_alpha_mt_per_ma)
    cfg.set("bootstrap.n", n_samples).set("bootstrap.seed", seed).set("bootstrap.forward", forward)
    cfg.set("bootstrap.half_plane", half_plane)
    out = _out_dir(cfg)

    m, prior, axis, domain = cfg.alpha(), cfg.prior(), cfg.axis(), cfg.domain()
    b = cfg.get("bootstrap")
    nominal = locator.fit_position(m, prior.mean_geometry, axis, b["forward"], domain, b["half_plane"])
    try:
        boot = locator.bootstrap_positions(
            m, prior, axis, cfg.get("model"), int(b["n"]), int(b["seed"]), b["forward"], domain, b["half_plane"]
        )
    except UnstableInversionError as exc:
        fileio.write_json(out / "locate.json", _provenance(cfg, ok=False, failure_fraction=exc.failure_fraction))
        raise
    est = locator.summarize(boot.samples, nominal.residual)
    edge = _edge_fraction(boot.samples, domain)
    if edge > 0.1:
        click.echo(
            f"warning: {edge:.0%} of the positions sit on the search-domain edge; the spread there is clipped "
            "and the alpha inputs may be inconsistent with the geometry at the given sigma",
            err=True,
        )
    pdf = locator.position_pdf(boot.samples)
    contours = pdf.contours()

    result = _provenance(
        cfg,
        ok=True,
        mean={"x_nm": est.x / NM, "z_nm": est.z / NM},
        std={"x_nm": est.std_x / NM, "z_nm": est.std_z / NM},
        nominal={"x_nm": nominal.x / NM, "z_nm": nominal.z / NM, "residual_mt_per_ma": nominal.residual},
        mirror=bool(nominal.mirror),
        mirror_fraction=boot.mirror_count / boot.n,
        failure_fraction=boot.failure_fraction,
        edge_fraction=edge,
        n=boot.n,
        seed=boot.seed,
        model=boot.model,
        pdf_mode_nm=[v / NM for v in pdf.mode()],
        contour_masses=sorted(contours),
    )
    fileio.write_json(out / "locate.json", result)
    fileio.write_csv(out / "locate_samples.csv", ("x_nm", "z_nm"), boot.samples / NM, _meta(cfg))
    xx, zz = np.meshgrid(pdf.x, pdf.z)
    rows = zip(xx.ravel() / NM, zz.ravel() / NM, pdf.density.ravel() * NM * NM)
    fileio.write_csv(out / "locate_pdf.csv", ("x_nm", "z_nm", "density_per_nm2"), rows, _meta(cfg))
    fg = field_magnitude_grid(prior.mean_geometry, cfg.get("fieldmap.current_ua") * UA, cfg.grid(), cfg.get("model"))
    figures.locate_svg(out / "locate.svg", fg, prior.mean_geometry, contours, (est.x, est.z), description=_meta(cfg))
    click.echo(
        f"x' = {est.x / NM:.1f} +/- {est.std_x / NM:.1f} nm, z' = {est.z / NM:.1f} +/- {est.std_z / NM:.1f} nm"
    )


def _edge_fraction(samples, domain, tol=0.01 * NM):
    x, z = samples[:, 0], samples[:, 1]
    on_edge = (
        (x <= domain.x_min + tol) | (x >= domain.x_max - tol) | (z <= domain.z_min + tol) | (z >= domain.z_max - tol)
    )
    return float(on_edge.mean()) if len(samples) else 0.0


# ---------------------------------------------------------------- couple


@cli.command()
@common
@click.option("--alpha-perp-mt-per-ma", type=float)
@click.option("--alpha-json", multiple=True, type=click.Path(dir_okay=False))
@click.option("--delta-i-na", type=float, help="Vacuum current fluctuations (default 35 nA).")
@click.option("--kappa-per-s", type=float)
@click.option("--gamma2-per-s", type=float)
@click.option("--eta", type=float)
def couple(cfg, alpha_perp_mt_per_ma, alpha_json, delta_i_na, kappa_per_s, gamma2_per_s, eta):
    """Spin-resonator coupling g and single-spin detection time."""
    _alpha_from_json(cfg, alpha_json)
    cfg.set("alpha.alpha_perp_mt_per_ma", alpha_perp_mt_per_ma)
    cfg.set("resonator.delta_i_na", delta_i_na).set("resonator.kappa_per_s", kappa_per_s)
    cfg.set("resonator.gamma2_per_s", gamma2_per_s).set("resonator.eta", eta)
    alpha_perp = cfg.get("alpha.alpha_perp_mt_per_ma")
    if alpha_perp is None:
        raise ValidationError("--alpha-perp-mt-per-ma is required")
    out = _out_dir(cfg)
    est = coupling.estimate(float(alpha_perp), cfg.resonator(), cfg.spin_constants())
    result = _provenance(cfg, **est.to_dict())
    fileio.write_json(out / "couple.json", result)
    click.echo(f"g/2pi = {est.g_over_2pi:.4g} Hz, detection time = {est.detection_time:.4g} s")


# ---------------------------------------------------------------- entry point


def run(argv=None):
    """Invoke the CLI and return the exit code instead of exiting."""
    try:
        cli.main(args=argv, prog_name="nvloc", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_VALIDATION
    except click.UsageError as exc:
        exc.show()
        return EXIT_VALIDATION
    except CommandFailed as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.code
    except UnstableInversionError as exc:
        click.echo(f"error: unstable inversion, failure fraction {exc.failure_fraction:.3f}: {exc}", err=True)
        return EXIT_UNSTABLE
    except (DataFormatError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_IO
    except ValidationError as exc:
        click.echo(f"error: invalid input: {exc}", err=True)
        return EXIT_VALIDATION
    except (FitError, InversionError, QuadratureError) as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_FIT
    except NVLocError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_FIT
    return EXIT_OK


def main():
    sys.exit(run())
