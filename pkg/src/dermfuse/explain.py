"""Shapley-value attribution for ensemble members and image regions.

Two games are played here. The member game asks how much each ensemble
member contributes to the fused probability of a target class: coalitions
are member subsets, valued by the weighted average restricted to the subset.
The superpixel game asks how much each image region contributes to an
external model's prediction: coalitions are grid-cell subsets, valued by
running the model on the image with all other cells replaced by the image's
mean color. Exact enumeration is used for small player counts, permutation
sampling beyond that.
"""

from __future__ import annotations

import math
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import TransportError, ValidationError
from .fusion import ProbabilityVector, WeightVector, weighted_average
from .imgproc import RasterImage, denormalize_image, save_image
from .metrics import CLASS_LABELS, MALIGNANT

EXACT_PLAYER_LIMIT = 20
# Crossover from exhaustive enumeration to permutation sampling for the
# superpixel game: 2^12 = 4,096 provider evaluations at most.
EXACT_CELL_LIMIT = 12
MAX_GRID_CELLS = 4096

_MANIFEST_NAME = "manifest"
_PREDICTIONS_NAME = "predictions"
_MANIFEST_HEADER = "index,image_file"
_PREDICTIONS_HEADER = "index,p_benign,p_malignant"


@dataclass(frozen=True)
class CoalitionValueFunction:
    """A deterministic cooperative game: subsets of range(n_players) to reals."""

    n_players: int
    evaluator: Callable[[frozenset[int]], float]

    def __post_init__(self):
        if self.n_players < 1:
            raise ValidationError(f"a game needs at least one player, got {self.n_players}")

    def value(self, coalition: frozenset[int]) -> float:
        return float(self.evaluator(coalition))


@dataclass(frozen=True)
class Attribution:
    """Per-player Shapley values with the game's anchor values.

    For the exact method the efficiency identity (phi sums to v_full minus
    v_empty) is enforced to 1e-9 at construction; for the sampled method the
    residual is recorded but unbounded.
    """

    phi: tuple[float, ...]
    v_empty: float
    v_full: float
    method: str
    efficiency_residual: float
    n_permutations: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.method not in ("exact", "sampled"):
            raise ValidationError(f"unknown attribution method {self.method!r}")
        if self.method == "exact":
            if abs(self.efficiency_residual) > 1e-9:
                raise ValidationError(
                    f"exact attribution violates efficiency: residual {self.efficiency_residual!r}"
                )
        else:
            if not self.n_permutations or self.n_permutations < 1:
                raise ValidationError("sampled attribution needs a positive permutation count")


def exact_shapley(v: CoalitionValueFunction) -> Attribution:
    """Shapley values by full coalition enumeration.

    phi_i = sum over S not containing i of |S|! (n-|S|-1)! / n! times the
    marginal v(S + i) - v(S). Feasible up to 20 players (2^20 evaluations);
    beyond that use sampled_shapley.
    """
    n = v.n_players
    if n > EXACT_PLAYER_LIMIT:
        raise ValidationError(
            f"{n} players exceed the exact enumeration bound of {EXACT_PLAYER_LIMIT}; "
            f"use sampled_shapley instead"
        )
    values = np.empty(1 << n, dtype=np.float64)
    for mask in range(1 << n):
        values[mask] = v.value(_mask_to_coalition(mask))

    sizes = np.zeros(1 << n, dtype=np.int64)
    masks = np.arange(1 << n)
    for bit in range(n):
        sizes += (masks >> bit) & 1
    # Order weight for a coalition of size s: 1 / (n * C(n-1, s)).
    weight_by_size = np.array([1.0 / (n * math.comb(n - 1, s)) for s in range(n)])

    phi = []
    for i in range(n):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        marginals = values[without | bit] - values[without]
        phi.append(float(np.sum(weight_by_size[sizes[without]] * marginals)))

    v_empty = float(values[0])
    v_full = float(values[-1])
    residual = sum(phi) - (v_full - v_empty)
    return Attribution(
        phi=tuple(phi),
        v_empty=v_empty,
        v_full=v_full,
        method="exact",
        efficiency_residual=residual,
    )


def _mask_to_coalition(mask: int) -> frozenset[int]:
    return frozenset(i for i in range(mask.bit_length()) if mask & (1 << i))


def _sampled_permutations(n_players: int, n_perms: int, seed: int) -> list[np.ndarray]:
    """The permutation schedule for sampled Shapley: one generator per
    permutation, seeded by (seed, index), so results do not depend on
    evaluation order or chunking."""
    if seed < 0:
        raise ValidationError(f"seed must be non-negative, got {seed}")
    return [
        np.random.default_rng([seed, index]).permutation(n_players)
        for index in range(n_perms)
    ]


def sampled_shapley(v: CoalitionValueFunction, n_perms: int, seed: int) -> Attribution:
    """Monte Carlo Shapley: average marginal contributions over sampled
    player orderings. Deterministic for a given seed."""
    if n_perms < 1:
        raise ValidationError(f"need at least one permutation, got {n_perms}")
    n = v.n_players
    totals = np.zeros(n, dtype=np.float64)
    cache: dict[frozenset[int], float] = {}

    def value(coalition: frozenset[int]) -> float:
        if coalition not in cache:
            cache[coalition] = v.value(coalition)
        return cache[coalition]

    v_empty = value(frozenset())
    v_full = value(frozenset(range(n)))
    for perm in _sampled_permutations(n, n_perms, seed):
        members: set[int] = set()
        previous = v_empty
        for player in perm:
            members.add(int(player))
            current = value(frozenset(members))
            totals[player] += current - previous
            previous = current
    phi = tuple(float(t / n_perms) for t in totals)
    residual = sum(phi) - (v_full - v_empty)
    return Attribution(
        phi=phi,
        v_empty=v_empty,
        v_full=v_full,
        method="sampled",
        efficiency_residual=residual,
        n_permutations=n_perms,
        seed=seed,
    )


def member_attribution(
    row: ProbabilityVector,
    weights: WeightVector,
    target_class: str = MALIGNANT,
    baseline: float = 0.5,
) -> Attribution:
    """Shapley attribution of the fused target-class probability to members.

    A coalition's value is the weighted average restricted to its members
    (weights renormalized over the coalition) at the target class. The empty
    coalition is worth the baseline (0.5, the uninformative binary prior),
    as is any coalition whose members all have zero weight; that makes
    zero-weight members exact dummies.
    """
    if target_class not in CLASS_LABELS:
        raise ValidationError(f"target class {target_class!r} not in {CLASS_LABELS}")
    if len(weights) != len(row):
        raise ValidationError(f"{len(weights)} weights for {len(row)} ensemble members")

    def value(coalition: frozenset[int]) -> float:
        members = sorted(coalition)
        if not members:
            return baseline
        if sum(weights.weights[i] for i in members) == 0.0:
            return baseline
        sub_pv = ProbabilityVector(
            benign=tuple(row.benign[i] for i in members),
            malignant=tuple(row.malignant[i] for i in members),
        )
        sub_w = WeightVector(weights=tuple(weights.weights[i] for i in members))
        fused = weighted_average(sub_pv, sub_w)
        return fused.m_pred if target_class == MALIGNANT else fused.b_pred

    return exact_shapley(CoalitionValueFunction(n_players=len(row), evaluator=value))


@dataclass(frozen=True)
class SuperpixelGrid:
    """A rows x cols partition of an image into rectangular cells.

    Cells are indexed row-major. Base cell size is dim // n; the last row
    and column absorb any remainder, so the cells tile the image exactly.
    """

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValidationError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def cell_bounds(self, index: int, width: int, height: int) -> tuple[int, int, int, int]:
        """(y0, y1, x0, x1) pixel bounds of one cell, half-open."""
        if not (0 <= index < self.n_cells):
            raise ValidationError(f"cell index {index} outside [0, {self.n_cells})")
        if height < self.rows or width < self.cols:
            raise ValidationError(
                f"a {self.rows}x{self.cols} grid does not fit a {width}x{height} image"
            )
        row, col = divmod(index, self.cols)
        cell_h = height // self.rows
        cell_w = width // self.cols
        y0 = row * cell_h
        y1 = height if row == self.rows - 1 else y0 + cell_h
        x0 = col * cell_w
        x1 = width if col == self.cols - 1 else x0 + cell_w
        return y0, y1, x0, x1


@dataclass(frozen=True)
class SuperpixelAttribution:
    """Cell-level Shapley values plus the per-pixel map they induce.

    The map is a signed raster (height x width); render positive values in
    red and negative in blue.
    """

    attribution: Attribution
    grid: SuperpixelGrid
    pixel_map: np.ndarray
    target_class: str


class PredictionProvider(Protocol):
    def predict(self, images: Sequence[RasterImage]) -> list[tuple[float, float]]: ...


class ExternalPredictionProvider:
    """Bridge to an external classifier through a file-based batch protocol.

    For each batch, a temporary request directory is filled with numbered
    PNG files and a ``manifest`` CSV (index,image_file); the provider command
    is invoked with the directory path appended and must exit 0 after
    writing a ``predictions`` CSV (index,p_benign,p_malignant) into the same
    directory. Every deviation raises a TransportError.
    """

    def __init__(self, command: str | Sequence[str], timeout: float = 120.0):
        if isinstance(command, str):
            parts = shlex.split(command)
        else:
            parts = [str(part) for part in command]
        if not parts:
            raise ValidationError("provider command is empty")
        if timeout <= 0:
            raise ValidationError(f"provider timeout must be positive, got {timeout!r}")
        self.command = parts
        self.timeout = timeout

    def predict(self, images: Sequence[RasterImage]) -> list[tuple[float, float]]:
        if len(images) == 0:
            return []
        request_dir = Path(tempfile.mkdtemp(prefix="provider-batch-"))
        try:
            manifest_lines = [_MANIFEST_HEADER]
            for index, image in enumerate(images):
                if image.normalized:
                    image = denormalize_image(image)
                filename = f"{index:06d}.png"
                save_image(image, request_dir / filename)
                manifest_lines.append(f"{index},{filename}")
            (request_dir / _MANIFEST_NAME).write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")

            try:
                completed = subprocess.run(
                    self.command + [str(request_dir)],
                    capture_output=True,
                    text=True,
                    timeout=self.timeout,
                )
            except subprocess.TimeoutExpired as exc:
                raise TransportError(
                    f"provider {self.command[0]!r} timed out after {self.timeout}s "
                    f"on a batch of {len(images)}"
                ) from exc
            except OSError as exc:
                raise TransportError(f"cannot invoke provider {self.command[0]!r}: {exc}") from exc
            if completed.returncode != 0:
                tail = (completed.stderr or "").strip().splitlines()[-3:]
                raise TransportError(
                    f"provider {self.command[0]!r} exited with code {completed.returncode}"
                    + (": " + " | ".join(tail) if tail else "")
                )
            return self._parse_predictions(request_dir, len(images))
        finally:
            shutil.rmtree(request_dir, ignore_errors=True)

    def _parse_predictions(self, request_dir: Path, n_images: int) -> list[tuple[float, float]]:
        predictions_path = request_dir / _PREDICTIONS_NAME
        try:
            text = predictions_path.read_text(encoding="utf-8")
        except OSError as exc:
            raise TransportError(f"provider wrote no {_PREDICTIONS_NAME} file: {exc}") from exc
        lines = [line for line in text.split("\n") if line != ""]
        if not lines or lines[0] != _PREDICTIONS_HEADER:
            raise TransportError(
                f"malformed provider response: expected header {_PREDICTIONS_HEADER!r}"
            )
        pairs: dict[int, tuple[float, float]] = {}
        for line in lines[1:]:
            parts = line.split(",")
            if len(parts) != 3:
                raise TransportError(f"malformed provider response row: {line!r}")
            try:
                index = int(parts[0])
                pair = (float(parts[1]), float(parts[2]))
            except ValueError:
                raise TransportError(f"malformed provider response row: {line!r}") from None
            if index in pairs:
                raise TransportError(f"provider response repeats index {index}")
            pairs[index] = pair
        if sorted(pairs) != list(range(n_images)):
            raise TransportError(
                f"provider returned {len(pairs)} rows for a batch of {n_images}"
            )
        return [pairs[index] for index in range(n_images)]


def predict_batch(
    provider: PredictionProvider,
    images: Sequence[RasterImage],
    batch_size: int = 256,
) -> list[tuple[float, float]]:
    """Run images through a provider in bounded batches, validating output.

    Each returned pair must be two probabilities in [0, 1] summing to 1
    within 1e-6; violations raise TransportError naming the batch. Order is
    preserved; the empty input yields an empty list.
    """
    if batch_size < 1:
        raise ValidationError(f"batch size must be positive, got {batch_size}")
    results: list[tuple[float, float]] = []
    for start in range(0, len(images), batch_size):
        batch = images[start:start + batch_size]
        pairs = provider.predict(batch)
        if len(pairs) != len(batch):
            raise TransportError(
                f"provider returned {len(pairs)} pairs for a batch of {len(batch)} "
                f"(images {start}..{start + len(batch) - 1})"
            )
        for offset, (p_benign, p_malignant) in enumerate(pairs):
            if not (0.0 <= p_benign <= 1.0 and 0.0 <= p_malignant <= 1.0):
                raise TransportError(
                    f"provider probability pair ({p_benign!r}, {p_malignant!r}) for image "
                    f"{start + offset} outside [0, 1]"
                )
            if abs(p_benign + p_malignant - 1.0) > 1e-6:
                raise TransportError(
                    f"provider pair for image {start + offset} sums to {p_benign + p_malignant!r}, not 1"
                )
        results.extend(pairs)
    return results


def superpixel_attribution(
    img: RasterImage,
    grid: SuperpixelGrid,
    provider: PredictionProvider,
    target_class: str = MALIGNANT,
    n_perms: int = 2000,
    seed: int = 0,
    batch_size: int = 256,
) -> SuperpixelAttribution:
    """Shapley attribution of a provider's prediction to image grid cells.

    A coalition keeps its cells from the original image and replaces every
    other cell with the image's mean color. All coalition images needed by
    the chosen method (exact enumeration up to 12 cells, permutation
    sampling beyond) are evaluated through the provider in batches, then the
    Shapley computation runs against the cached values. Deterministic for a
    given seed, image, and provider.
    """
    if target_class not in CLASS_LABELS:
        raise ValidationError(f"target class {target_class!r} not in {CLASS_LABELS}")
    n_cells = grid.n_cells
    if n_cells > MAX_GRID_CELLS:
        raise ValidationError(f"{n_cells} grid cells exceed the limit of {MAX_GRID_CELLS}")
    bounds = [grid.cell_bounds(i, img.width, img.height) for i in range(n_cells)]

    if n_cells <= EXACT_CELL_LIMIT:
        coalitions = [_mask_to_coalition(mask) for mask in range(1 << n_cells)]
    else:
        needed = {frozenset(), frozenset(range(n_cells))}
        for perm in _sampled_permutations(n_cells, n_perms, seed):
            members: set[int] = set()
            for player in perm:
                members.add(int(player))
                needed.add(frozenset(members))
        coalitions = sorted(needed, key=lambda s: (len(s), sorted(s)))

    if img.normalized:
        baseline_value = img.data.reshape(-1, 3).mean(axis=0)
        baseline = np.broadcast_to(baseline_value, img.data.shape)
    else:
        baseline_value = np.floor(img.data.reshape(-1, 3).astype(np.float64).mean(axis=0) + 0.5)
        baseline = np.broadcast_to(baseline_value.astype(np.uint8), img.data.shape)

    cache: dict[frozenset[int], float] = {}
    for start in range(0, len(coalitions), batch_size):
        chunk = coalitions[start:start + batch_size]
        masked_images = []
        for coalition in chunk:
            data = np.array(baseline, copy=True)
            for index in coalition:
                y0, y1, x0, x1 = bounds[index]
                data[y0:y1, x0:x1] = img.data[y0:y1, x0:x1]
            masked_images.append(RasterImage(data, normalized=img.normalized))
        pairs = predict_batch(provider, masked_images, batch_size=batch_size)
        for coalition, (p_benign, p_malignant) in zip(chunk, pairs):
            cache[coalition] = p_malignant if target_class == MALIGNANT else p_benign

    game = CoalitionValueFunction(n_players=n_cells, evaluator=cache.__getitem__)
    if n_cells <= EXACT_CELL_LIMIT:
        attribution = exact_shapley(game)
    else:
        attribution = sampled_shapley(game, n_perms, seed)

    pixel_map = np.zeros((img.height, img.width), dtype=np.float64)
    for index, (y0, y1, x0, x1) in enumerate(bounds):
        pixel_map[y0:y1, x0:x1] = attribution.phi[index]
    pixel_map.setflags(write=False)
    return SuperpixelAttribution(
        attribution=attribution,
        grid=grid,
        pixel_map=pixel_map,
        target_class=target_class,
    )
