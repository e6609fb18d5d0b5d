"""
Model Graphs

Declarative network descriptions. A ``Subgraph`` collects primitive
``LayerSpec`` entries and the shapes of the parameters they reference; the
composite builders (dense block, transition, ASPP, decoder) each return one.
A ``ModelGraph`` owns the ordered layers of a whole network together with its
parameter store and evaluates them.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from lincrack.core.exceptions import InputSizeError, ModelError, ShapeMismatchError, UnknownTapError
from lincrack.core.tensor import (
    ConvParams,
    Tensor,
    avg_pool,
    avg_pool_global,
    batch_norm,
    bilinear_resize,
    concat,
    conv2d,
    flatten,
    linear,
    max_pool,
    relu,
    DEFAULT_BN_EPS,
    DEFAULT_BN_MOMENTUM,
)
from lincrack.utils.logger import get_logger

logger = get_logger(__name__)

PRIMITIVE_KINDS = (
    'input', 'conv', 'bn', 'relu', 'max_pool', 'avg_pool', 'global_pool',
    'flatten', 'linear', 'resize', 'concat',
)
COMPOSITE_KINDS = ('model', 'stem', 'dense-layer', 'dense-block', 'transition', 'aspp', 'decoder')


@dataclass
class LayerSpec:
    """One primitive layer.

    Args:
        name: Unique layer name; also the name of its output
        kind: One of PRIMITIVE_KINDS
        inputs: Names of the layers whose outputs this layer consumes
        params: Hyperparameters for the kind
        param_names: Parameter and buffer names the layer reads
        block: Name of the composite block the layer belongs to
    """
    name: str
    kind: str
    inputs: Tuple[str, ...] = ()
    params: Dict[str, Any] = field(default_factory=dict)
    param_names: Tuple[str, ...] = ()
    block: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'kind': self.kind,
            'inputs': list(self.inputs),
            'params': self.params,
            'param_names': list(self.param_names),
            'block': self.block,
        }


@dataclass
class ParamSpec:
    """Shape and initializer of one parameter or buffer."""
    name: str
    shape: Tuple[int, ...]
    init: str  # he_normal | fan_in_normal | zeros | ones
    buffer: bool = False


class Subgraph:
    """
    A group of layers with one external source and one output.

    Layer names are prefixed with the subgraph name. ``channels`` tracks the
    channel count of every produced output so builders can size parameters.
    """

    def __init__(self, name: str, kind: str, source: str, source_channels: int, block: str = ""):
        if kind not in COMPOSITE_KINDS:
            raise ModelError(f"unknown block kind {kind!r}")
        self.name = name
        self.kind = kind
        self.source = source
        self.layers: List[LayerSpec] = []
        self.params: List[ParamSpec] = []
        self.channels: Dict[str, int] = {source: source_channels}
        self.blocks: Dict[str, str] = {name: kind} if name else {}
        self.output = source
        self.info: Dict[str, Any] = {}
        self._block = block or name

    @property
    def out_channels(self) -> int:
        return self.channels[self.output]

    def _qualify(self, local: str) -> str:
        return f"{self.name}.{local}" if self.name else local

    def add(self, spec: LayerSpec, channels: int, params: Sequence[ParamSpec] = ()) -> str:
        for name in spec.inputs:
            if name not in self.channels:
                raise ModelError(f"layer {spec.name} reads unknown input {name}")
        if not spec.block:
            spec.block = self._block
        self.layers.append(spec)
        self.params.extend(params)
        self.channels[spec.name] = channels
        self.output = spec.name
        return spec.name

    def include(self, other: 'Subgraph') -> str:
        """Append another subgraph whose source is already produced here."""
        if other.source not in self.channels:
            raise ModelError(f"subgraph {other.name} reads unknown source {other.source}")
        self.layers.extend(other.layers)
        self.params.extend(other.params)
        self.channels.update(other.channels)
        self.blocks.update(other.blocks)
        self.output = other.output
        return other.output

    # Primitive helpers -----------------------------------------------------

    def add_input(self, name: str = 'input') -> str:
        """Declare the graph input; only whole-model graphs have one."""
        return self.add(LayerSpec(name, 'input'), self.channels[name])

    def conv(self, local: str, source: str, out_channels: int, kernel: int, stride: int = 1,
             padding: int = 0, dilation: int = 1, groups: int = 1, bias: bool = False) -> str:
        name = self._qualify(local)
        in_channels = self.channels[source]
        conv = ConvParams(stride=stride, padding=padding, dilation=dilation, groups=groups)
        params = [ParamSpec(f"{name}.weight", (out_channels, in_channels // groups, kernel, kernel), 'he_normal')]
        if bias:
            params.append(ParamSpec(f"{name}.bias", (out_channels,), 'zeros'))
        spec = LayerSpec(name, 'conv', (source,), {'conv': conv.to_dict()}, tuple(p.name for p in params))
        return self.add(spec, out_channels, params)

    def bn(self, local: str, source: str) -> str:
        name = self._qualify(local)
        channels = self.channels[source]
        params = [
            ParamSpec(f"{name}.gamma", (channels,), 'ones'),
            ParamSpec(f"{name}.beta", (channels,), 'zeros'),
            ParamSpec(f"{name}.running_mean", (channels,), 'zeros', buffer=True),
            ParamSpec(f"{name}.running_var", (channels,), 'ones', buffer=True),
        ]
        spec = LayerSpec(name, 'bn', (source,), {'eps': DEFAULT_BN_EPS, 'momentum': DEFAULT_BN_MOMENTUM},
                         tuple(p.name for p in params))
        return self.add(spec, channels, params)

    def relu(self, local: str, source: str) -> str:
        return self.add(LayerSpec(self._qualify(local), 'relu', (source,)), self.channels[source])

    def conv_bn_relu(self, local: str, source: str, out_channels: int, kernel: int, **conv_args: Any) -> str:
        out = self.conv(f"{local}.conv", source, out_channels, kernel, **conv_args)
        out = self.bn(f"{local}.bn", out)
        return self.relu(f"{local}.relu", out)

    def separable_conv_bn_relu(self, local: str, source: str, out_channels: int, dilation: int = 1) -> str:
        """Depthwise 3×3 (atrous) convolution, pointwise 1×1 convolution, bn, relu."""
        channels = self.channels[source]
        out = self.conv(f"{local}.depthwise", source, channels, 3, padding=dilation,
                        dilation=dilation, groups=channels)
        out = self.conv(f"{local}.pointwise", out, out_channels, 1)
        out = self.bn(f"{local}.bn", out)
        return self.relu(f"{local}.relu", out)

    def max_pool(self, local: str, source: str, window: int, stride: int, padding: int = 0) -> str:
        spec = LayerSpec(self._qualify(local), 'max_pool', (source,),
                         {'window': window, 'stride': stride, 'padding': padding})
        return self.add(spec, self.channels[source])

    def avg_pool(self, local: str, source: str, window: int, stride: int) -> str:
        spec = LayerSpec(self._qualify(local), 'avg_pool', (source,), {'window': window, 'stride': stride})
        return self.add(spec, self.channels[source])

    def global_pool(self, local: str, source: str) -> str:
        return self.add(LayerSpec(self._qualify(local), 'global_pool', (source,)), self.channels[source])

    def flatten(self, local: str, source: str) -> str:
        return self.add(LayerSpec(self._qualify(local), 'flatten', (source,)), self.channels[source])

    def linear(self, local: str, source: str, out_features: int) -> str:
        name = self._qualify(local)
        in_features = self.channels[source]
        params = [
            ParamSpec(f"{name}.weight", (out_features, in_features), 'fan_in_normal'),
            ParamSpec(f"{name}.bias", (out_features,), 'zeros'),
        ]
        spec = LayerSpec(name, 'linear', (source,), {}, tuple(p.name for p in params))
        return self.add(spec, out_features, params)

    def resize(self, local: str, source: str, size_of: str) -> str:
        """Bilinear resize of ``source`` to the spatial size of ``size_of``."""
        if size_of not in self.channels:
            raise ModelError(f"resize reference {size_of} is not produced before {local}")
        spec = LayerSpec(self._qualify(local), 'resize', (source, size_of), {'size_of': size_of})
        return self.add(spec, self.channels[source])

    def concat(self, local: str, sources: Sequence[str]) -> str:
        spec = LayerSpec(self._qualify(local), 'concat', tuple(sources), {'axis': 1})
        return self.add(spec, sum(self.channels[s] for s in sources))


def initialize_parameters(specs: Iterable[ParamSpec], seed: int) -> Tuple[Dict[str, Tensor], Dict[str, Tensor]]:
    """
    Draw initial parameters from one seeded generator, in declaration order.

    Convolutions use a fan-in-scaled normal (std √(2/fan_in)), linear layers
    std √(1/fan_in); batch-norm gamma starts at 1 and beta at 0.
    """
    rng = np.random.default_rng(seed)
    parameters: Dict[str, Tensor] = {}
    buffers: Dict[str, Tensor] = {}
    for spec in specs:
        fan_in = int(np.prod(spec.shape[1:])) if len(spec.shape) > 1 else 1
        if spec.init == 'he_normal':
            values = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=spec.shape)
        elif spec.init == 'fan_in_normal':
            values = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=spec.shape)
        elif spec.init == 'zeros':
            values = np.zeros(spec.shape)
        elif spec.init == 'ones':
            values = np.ones(spec.shape)
        else:
            raise ModelError(f"unknown initializer {spec.init} for {spec.name}")
        if spec.buffer:
            buffers[spec.name] = Tensor(values, name=spec.name)
        else:
            parameters[spec.name] = Tensor(values, requires_grad=True, name=spec.name)
    return parameters, buffers


class ModelGraph:
    """
    Ordered layers plus their parameter store.

    Evaluation is deterministic for fixed parameters. A built graph with
    loaded parameters may serve concurrent inference; training mutates the
    parameters and batch-norm buffers and needs exclusive access.
    """

    def __init__(
        self,
        layers: Sequence[LayerSpec],
        parameters: Dict[str, Tensor],
        buffers: Dict[str, Tensor],
        metadata: Dict[str, Any],
    ):
        self.layers: List[LayerSpec] = list(layers)
        self.parameters = parameters
        self.buffers = buffers
        self.metadata = metadata
        self._index = {spec.name: i for i, spec in enumerate(self.layers)}
        self.validate()

    @classmethod
    def from_subgraph(cls, graph: Subgraph, metadata: Dict[str, Any], seed: int) -> 'ModelGraph':
        parameters, buffers = initialize_parameters(graph.params, seed)
        metadata = dict(metadata)
        metadata.setdefault('output', graph.output)
        metadata.setdefault('blocks', dict(graph.blocks))
        return cls(graph.layers, parameters, buffers, metadata)

    # Introspection ---------------------------------------------------------

    @property
    def input_size(self) -> Tuple[int, int]:
        return tuple(self.metadata['input_size'])

    @property
    def in_channels(self) -> int:
        return self.metadata.get('in_channels', 3)

    @property
    def num_classes(self) -> int:
        return self.metadata['num_classes']

    @property
    def output_name(self) -> str:
        return self.metadata['output']

    @property
    def taps(self) -> Dict[str, str]:
        return self.metadata.get('taps', {})

    @property
    def layer_names(self) -> List[str]:
        return [spec.name for spec in self.layers]

    def layer(self, name: str) -> LayerSpec:
        if name not in self._index:
            raise UnknownTapError(f"unknown layer: {name}")
        return self.layers[self._index[name]]

    def resolve_tap(self, name: str) -> str:
        """Map a tap alias or a raw layer name to a layer name."""
        if name in self.taps:
            return self.taps[name]
        if name in self._index:
            return name
        raise UnknownTapError(f"unknown tap: {name} (known taps: {sorted(self.taps)})")

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return list(self.parameters.items())

    def parameter_list(self) -> List[Tensor]:
        return list(self.parameters.values())

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.parameters.values()))

    def validate(self) -> None:
        """Check names resolve, connectivity is acyclic and taps exist."""
        seen = set()
        for spec in self.layers:
            if spec.kind not in PRIMITIVE_KINDS:
                raise ModelError(f"layer {spec.name} has unknown kind {spec.kind}")
            if spec.name in seen:
                raise ModelError(f"duplicate layer name {spec.name}")
            for source in spec.inputs:
                if source not in seen:
                    raise ModelError(f"layer {spec.name} reads {source} before it is produced")
            for pname in spec.param_names:
                if pname not in self.parameters and pname not in self.buffers:
                    raise ModelError(f"layer {spec.name} references missing parameter {pname}")
            seen.add(spec.name)
        if self.layers[0].kind != 'input':
            raise ModelError("first layer must be the input")
        if self.output_name not in seen:
            raise ModelError(f"output layer {self.output_name} does not exist")
        for alias, name in self.taps.items():
            if name not in seen:
                raise ModelError(f"tap {alias} names missing layer {name}")

    # Parameters ------------------------------------------------------------

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of all parameters and buffers, parameters first."""
        state = {name: t.data.copy() for name, t in self.parameters.items()}
        state.update({name: t.data.copy() for name, t in self.buffers.items()})
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        """
        Replace parameter and buffer values.

        Raises:
            ShapeMismatchError: On a missing/unexpected name (strict) or a shape mismatch
        """
        targets = {**self.parameters, **self.buffers}
        if strict:
            missing = sorted(set(targets) - set(state))
            unexpected = sorted(set(state) - set(targets))
            if missing or unexpected:
                raise ShapeMismatchError(f"state does not match model: missing={missing[:5]} "
                                         f"unexpected={unexpected[:5]}")
        for name, values in state.items():
            if name not in targets:
                continue
            values = np.asarray(values, dtype=np.float64)
            if values.shape != targets[name].shape:
                raise ShapeMismatchError(f"{name}: expected shape {targets[name].shape}, got {values.shape}")
        for name, values in state.items():
            if name in targets:
                targets[name].data = np.array(values, dtype=np.float64)

    def zero_grad(self) -> None:
        for t in self.parameters.values():
            t.zero_grad()

    # Evaluation ------------------------------------------------------------

    def check_input(self, image: Tensor) -> None:
        """Raise InputSizeError unless image is B×C×H×W at the model input size."""
        height, width = self.input_size
        if image.ndim != 4 or image.shape[1:] != (self.in_channels, height, width):
            raise InputSizeError(
                f"expected B×{self.in_channels}×{height}×{width} input, got {image.shape}"
            )

    def run(
        self,
        image: Tensor,
        training: bool = False,
        taps: Sequence[str] = (),
    ) -> Tuple[Tensor, Dict[str, Tensor]]:
        """
        Evaluate the network.

        Args:
            image: B×C×H×W input at the model input size
            training: Batch statistics for batch-norm (and running-stat updates)
            taps: Tap aliases or layer names whose outputs are returned

        Returns:
            (output, {tap: intermediate tensor})
        """
        self.check_input(image)
        wanted = {tap: self.resolve_tap(tap) for tap in taps}
        cache = self._evaluate({'input': image}, 1, training, keep=set(wanted.values()))
        return cache[self.output_name], {tap: cache[name] for tap, name in wanted.items()}

    def forward(self, image: Tensor, training: bool = False) -> Tensor:
        return self.run(image, training=training)[0]

    __call__ = forward

    def resume_from(
        self,
        layer: str,
        tensor: Tensor,
        context: Optional[Mapping[str, Tensor]] = None,
        training: bool = False,
    ) -> Tensor:
        """
        Evaluate the layers after ``layer`` with ``tensor`` as its output.

        Args:
            layer: Tap alias or layer name
            tensor: Output of ``layer``
            context: Other earlier outputs later layers read (skip connections,
                resize references), keyed by tap alias or layer name

        Raises:
            ModelError: If a later layer reads an earlier output missing from context
        """
        name = self.resolve_tap(layer)
        cache = {self.resolve_tap(key): value for key, value in (context or {}).items()}
        cache[name] = tensor
        cache = self._evaluate(cache, self._index[name] + 1, training, keep=set())
        return cache[self.output_name]

    def _evaluate(self, cache: Dict[str, Tensor], start: int, training: bool, keep: set) -> Dict[str, Tensor]:
        # Free intermediates once their last reader has run, unless requested
        last_use: Dict[str, int] = {}
        for i in range(start, len(self.layers)):
            for source in self.layers[i].inputs:
                last_use[source] = i
        keep = keep | {self.output_name}

        for i in range(start, len(self.layers)):
            spec = self.layers[i]
            try:
                inputs = [cache[source] for source in spec.inputs]
            except KeyError as e:
                raise ModelError(f"layer {spec.name} needs {e.args[0]}, which is not available") from e
            cache[spec.name] = self._apply(spec, inputs, training)
            for source in spec.inputs:
                if last_use.get(source) == i and source not in keep:
                    cache.pop(source, None)
        return cache

    def _apply(self, spec: LayerSpec, inputs: List[Tensor], training: bool) -> Tensor:
        kind = spec.kind
        p = spec.params
        if kind == 'conv':
            weight = self.parameters[spec.param_names[0]]
            bias = self.parameters[spec.param_names[1]] if len(spec.param_names) > 1 else None
            return conv2d(inputs[0], weight, bias, ConvParams.from_dict(p['conv']))
        if kind == 'bn':
            gamma, beta, mean, var = spec.param_names
            return batch_norm(inputs[0], self.parameters[gamma], self.parameters[beta],
                              self.buffers[mean], self.buffers[var],
                              eps=p['eps'], training=training, momentum=p['momentum'])
        if kind == 'relu':
            return relu(inputs[0])
        if kind == 'max_pool':
            return max_pool(inputs[0], p['window'], p['stride'], p['padding'])
        if kind == 'avg_pool':
            return avg_pool(inputs[0], p['window'], p['stride'])
        if kind == 'global_pool':
            return avg_pool_global(inputs[0])
        if kind == 'flatten':
            return flatten(inputs[0])
        if kind == 'linear':
            return linear(inputs[0], self.parameters[spec.param_names[0]], self.parameters[spec.param_names[1]])
        if kind == 'resize':
            height, width = inputs[1].shape[2], inputs[1].shape[3]
            if inputs[0].shape[2:] == (height, width):
                return inputs[0]
            return bilinear_resize(inputs[0], height, width)
        if kind == 'concat':
            return concat(inputs, axis=p['axis'])
        raise ModelError(f"layer {spec.name} has unsupported kind {kind}")

    def describe(self) -> Dict[str, Any]:
        """Structure summary: metadata plus the layer list."""
        return {
            'metadata': self.metadata,
            'layers': [spec.to_dict() for spec in self.layers],
            'num_parameters': self.num_parameters(),
        }
