"""Encoder f_theta, classifier head g_phi and the bundle holding both."""

import math
from dataclasses import dataclass, field

import numpy as np

from acedg.schemas.network import ClassifierSpec, EncoderSpec
from acedg.utils.tensor import DimensionError, Tensor, linear, parameter, relu

CHECKPOINT_VERSION = "acedg-checkpoint/1"


def _dense_stack(x: Tensor, params: list[Tensor], activate_last: bool) -> Tensor:
    """Apply (weight, bias) pairs in order with ReLU between layers."""
    out = x
    layers = len(params) // 2
    for i in range(layers):
        out = linear(out, params[2 * i], params[2 * i + 1])
        if i < layers - 1 or activate_last:
            out = relu(out)
    return out


@dataclass
class ClassifierHead:
    """Callable view of g_phi: latent rows (k x n) to logits (k x C)."""

    spec: ClassifierSpec
    params: list[Tensor]

    @classmethod
    def from_arrays(
        cls,
        weights: list[np.ndarray | list],
        biases: list[np.ndarray | list],
    ) -> "ClassifierHead":
        """Build a head from explicit (out x in) weights and biases, input side first."""
        ws = [np.asarray(w, dtype=np.float64) for w in weights]
        bs = [np.asarray(b, dtype=np.float64) for b in biases]
        spec = ClassifierSpec(
            latent_dim=ws[0].shape[1],
            num_classes=ws[-1].shape[0],
            hidden_widths=[w.shape[0] for w in ws[:-1]],
        )
        params: list[Tensor] = []
        for w, b in zip(ws, bs):
            params.extend([parameter(w), parameter(b)])
        return cls(spec=spec, params=params)

    @property
    def is_affine(self) -> bool:
        return len(self.params) == 2

    @property
    def latent_dim(self) -> int:
        return self.params[0].shape[1]

    @property
    def num_outputs(self) -> int:
        return self.params[-1].shape[0]

    def affine_parameters(self) -> tuple[Tensor, Tensor]:
        """Return (W, b) of an affine head.

        Raises:
            ValueError: If the head has hidden layers
        """
        if not self.is_affine:
            raise ValueError("Head has hidden layers; no affine parameters")
        return self.params[0], self.params[1]

    def __call__(self, z: Tensor) -> Tensor:
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise DimensionError(f"classifier expects k x {self.latent_dim}, got {z.shape}")
        return _dense_stack(z, self.params, activate_last=False)


@dataclass
class ModelBundle:
    """Parameters of f_theta and g_phi plus the specs they were built from.

    Weights are stored (out x in); biases are 1-D. Parameter lists hold
    weight, bias pairs from input side to output side.
    """

    encoder_spec: EncoderSpec
    classifier_spec: ClassifierSpec
    encoder_params: list[Tensor]
    classifier_params: list[Tensor]
    version: str = field(default=CHECKPOINT_VERSION)

    def parameters(self) -> list[Tensor]:
        return [*self.encoder_params, *self.classifier_params]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named: list[tuple[str, Tensor]] = []
        for prefix, params in (("encoder", self.encoder_params), ("classifier", self.classifier_params)):
            for i, p in enumerate(params):
                kind = "weight" if i % 2 == 0 else "bias"
                named.append((f"{prefix}.{i // 2}.{kind}", p))
        return named

    @property
    def head(self) -> ClassifierHead:
        return ClassifierHead(spec=self.classifier_spec, params=self.classifier_params)

    def clone(self) -> "ModelBundle":
        """Deep copy with fresh parameter leaves."""
        return ModelBundle(
            encoder_spec=self.encoder_spec,
            classifier_spec=self.classifier_spec,
            encoder_params=[parameter(p.values) for p in self.encoder_params],
            classifier_params=[parameter(p.values) for p in self.classifier_params],
            version=self.version,
        )


def expected_shapes(encoder_spec: EncoderSpec, classifier_spec: ClassifierSpec) -> list[tuple[int, ...]]:
    """Parameter shapes in declaration order for a spec pair."""
    shapes: list[tuple[int, ...]] = []
    for out_dim, in_dim in [*encoder_spec.layer_shapes(), *classifier_spec.layer_shapes()]:
        shapes.extend([(out_dim, in_dim), (out_dim,)])
    return shapes


def _init_layers(layer_shapes: list[tuple[int, int]], rng: np.random.Generator) -> list[Tensor]:
    params: list[Tensor] = []
    for out_dim, in_dim in layer_shapes:
        bound = math.sqrt(6.0 / in_dim)
        params.append(parameter(rng.uniform(-bound, bound, size=(out_dim, in_dim))))
        params.append(parameter(np.zeros(out_dim)))
    return params


def init_bundle(encoder_spec: EncoderSpec, classifier_spec: ClassifierSpec, seed: int) -> ModelBundle:
    """Initialize a bundle with fan-in scaled uniform weights and zero biases.

    Weights are drawn from U(-sqrt(6/fan_in), sqrt(6/fan_in)), encoder layers
    first, from one generator seeded by ``seed``.

    Raises:
        DimensionError: If the specs disagree on the latent dimension
    """
    if encoder_spec.latent_dim != classifier_spec.latent_dim:
        raise DimensionError(
            f"encoder latent dim {encoder_spec.latent_dim} != classifier latent dim {classifier_spec.latent_dim}"
        )
    rng = np.random.default_rng(seed)
    encoder_params = _init_layers(encoder_spec.layer_shapes(), rng)
    classifier_params = _init_layers(classifier_spec.layer_shapes(), rng)
    return ModelBundle(
        encoder_spec=encoder_spec,
        classifier_spec=classifier_spec,
        encoder_params=encoder_params,
        classifier_params=classifier_params,
    )


def encode(bundle: ModelBundle, x: Tensor) -> Tensor:
    """Latent features z = f_theta(x) for a batch x (b x d).

    Raises:
        DimensionError: If d differs from the encoder's input dimension
    """
    if x.ndim != 2 or x.shape[1] != bundle.encoder_spec.input_dim:
        raise DimensionError(f"encoder expects b x {bundle.encoder_spec.input_dim}, got {x.shape}")
    return _dense_stack(x, bundle.encoder_params, activate_last=True)


def classify(bundle: ModelBundle, z: Tensor) -> Tensor:
    """Class logits g_phi(z) for latent rows z (b x n)."""
    return bundle.head(z)


def forward(bundle: ModelBundle, x: Tensor) -> Tensor:
    return classify(bundle, encode(bundle, x))
