"""Static SVG figures and CSV exports."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

SIZE = 640
PAD = 40


def _header(config_hash: str | None) -> str:
    return f"# config-hash: {config_hash}\n" if config_hash else ""


def _write_csv(path, columns, rows, config_hash=None) -> None:
    buf = io.StringIO()
    buf.write(_header(config_hash))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path) -> tuple:
    """Columns and float rows of a CSV written here (comment lines skipped)."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
             if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    cols = next(reader)
    return cols, np.array([[float(v) for v in row] for row in reader])


def raster_csv(raster, path, config_hash=None) -> None:
    X, Y = np.meshgrid(raster.xs, raster.ys)
    rows = zip(X.ravel().round(12), Y.ravel().round(12), raster.mask.ravel().astype(int))
    _write_csv(path, ["re", "im", "member"], rows, config_hash)


def boundary_csv(polylines, path, config_hash=None) -> None:
    """Polylines separated by ``nan,nan`` rows."""
    rows = []
    for i, line in enumerate(polylines):
        if i:
            rows.append(("nan", "nan"))
        rows.extend((repr(float(z.real)), repr(float(z.imag))) for z in line)
    _write_csv(path, ["re", "im"], rows, config_hash)


def cloud_csv(samples, path, config_hash=None) -> None:
    rows = [(s.z.real, s.z.imag, s.rho, s.theta, int(s.trusted)) for s in samples]
    _write_csv(path, ["re", "im", "rho", "theta", "trusted"], rows, config_hash)


def trajectory_csv(traj, path, config_hash=None) -> None:
    n, m = traj.u.shape[1], traj.x.shape[1]
    cols = (["t"] + [f"u{i}" for i in range(n)] + [f"x{i}" for i in range(m)]
            + [f"y{i}" for i in range(n)] + ["event_flag", "mode"])
    flags = np.zeros(len(traj.t), int)
    for te in traj.reset_times:
        flags[min(int(np.ceil(te / traj.step - 1e-9)), len(flags) - 1)] = 1
    modes = traj.modes if traj.modes is not None else np.full(len(traj.t), -1)
    body = np.column_stack([traj.t, traj.u, traj.x, traj.y])
    rows = ([*r, f, md] for r, f, md in zip(body.tolist(), flags, modes))
    _write_csv(path, cols, rows, config_hash)


class Figure:
    """Minimal SVG canvas in complex-plane coordinates."""

    def __init__(self, window):
        self.window = tuple(map(float, window))
        self.items: list = []

    def _xy(self, z):
        xmin, xmax, ymin, ymax = self.window
        scale = (SIZE - 2 * PAD) / max(xmax - xmin, ymax - ymin)
        z = np.asarray(z, dtype=complex)
        return PAD + (z.real - xmin) * scale, SIZE - PAD - (z.imag - ymin) * scale

    def _path(self, line) -> str:
        px, py = self._xy(line)
        return "M" + " L".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))

    def region(self, polylines, fill="#4f7fd0", stroke="#1f3f90", opacity=0.6):
        if not polylines:
            return
        d = " ".join(self._path(line) + " Z" for line in polylines)
        self.items.append(f'<path d="{d}" fill="{fill}" fill-opacity="{opacity}" '
                          f'fill-rule="evenodd" stroke="{stroke}" stroke-width="1"/>')

    def curve(self, polylines, stroke="black", dash=None):
        style = f' stroke-dasharray="{dash}"' if dash else ""
        for line in polylines:
            if len(line) > 1:
                self.items.append(f'<path d="{self._path(line)}" fill="none" stroke="{stroke}" '
                                  f'stroke-width="1.5"{style}/>')

    def dots(self, points, color="#1030a0", r=1.6):
        px, py = self._xy(points)
        for a, b in zip(px, py):
            self.items.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{r}" fill="{color}"/>')

    def segment(self, a: complex, b: complex, color="red"):
        (x1, x2), (y1, y2) = self._xy([a, b])
        self.items.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                          f'stroke="{color}" stroke-width="2"/>')

    def _axes(self) -> list:
        xmin, xmax, ymin, ymax = self.window
        out = []
        if ymin <= 0 <= ymax:
            (x1, x2), (y, _) = self._xy([complex(xmin, 0), complex(xmax, 0)])
            out.append(f'<line x1="{x1:.2f}" y1="{y:.2f}" x2="{x2:.2f}" y2="{y:.2f}" stroke="#999"/>')
        if xmin <= 0 <= xmax:
            (x, _), (y1, y2) = self._xy([complex(0, ymin), complex(0, ymax)])
            out.append(f'<line x1="{x:.2f}" y1="{y1:.2f}" x2="{x:.2f}" y2="{y2:.2f}" stroke="#999"/>')
        return out

    def text(self, config_hash=None) -> str:
        head = f"<!-- config-hash: {config_hash} -->\n" if config_hash else ""
        body = "\n".join(self._axes() + self.items)
        return (f'{head}<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
                f'viewBox="0 0 {SIZE} {SIZE}">\n<rect width="100%" height="100%" fill="white"/>\n'
                f"{body}\n</svg>\n")

    def save(self, path, config_hash=None) -> None:
        Path(path).write_text(self.text(config_hash), encoding="utf-8")
