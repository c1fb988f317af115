"""Registry of coefficient, domain and data generators."""

import inspect
import logging
from dataclasses import dataclass
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Optional,
    Tuple,
    Type,
    Union,
    get_args,
    get_origin,
)

from typing_extensions import Literal

from .exceptions import DiniKitError, FamilyError, InvalidFamilyArguments

logger = logging.getLogger(__name__)

FamilyKind = Literal["coefficient", "domain", "data"]

_REGISTRY: Dict[Tuple[str, str], "Family"] = {}


@dataclass
class Family:
    """A registered generator with metadata and a parameter schema."""

    kind: str
    name: str
    func: Callable[..., Any]
    description: str
    parameters: Dict[str, Any]

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        """Call the generator after binding and type-checking its arguments.

        Errors raised by the numerical layers pass through unchanged; anything
        else is wrapped in FamilyError.
        """
        sig = inspect.signature(self.func)

        try:
            bound = sig.bind(*args, **kwargs)
        except TypeError as exc:
            raise InvalidFamilyArguments(
                f"Invalid arguments for {self.kind} family '{self.name}': {exc}"
            ) from exc

        for param_name, value in bound.arguments.items():
            annotation = sig.parameters[param_name].annotation
            if annotation is inspect.Parameter.empty or value is None:
                continue
            if not _is_instance_of_type(value, annotation):
                raise InvalidFamilyArguments(
                    f"Invalid type for argument '{param_name}' "
                    f"in family '{self.name}': "
                    f"expected {annotation}, got {type(value).__name__}"
                )

        try:
            return self.func(*bound.args, **bound.kwargs)
        except DiniKitError:
            raise
        except Exception as exc:
            raise FamilyError(
                f"Error in {self.kind} family '{self.name}': "
                f"{type(exc).__name__}: {exc}"
            ) from exc

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "name": self.name,
            "description": self.description,
            "parameters": self.parameters,
        }


def family(
    kind: FamilyKind, name: Optional[str] = None
) -> Callable[[Callable[..., Any]], Callable[..., Any]]:
    """
    Decorator to register a generator under ``(kind, name)``.

    Args:
        kind: One of "coefficient", "domain" or "data"
        name: Registry name; defaults to the function name with "_" → "-"

    Returns:
        The original function, with a `._family` attribute attached.
    """

    def decorator(f: Callable[..., Any]) -> Callable[..., Any]:
        family_name = name or f.__name__.replace("_", "-")
        sig = inspect.signature(f)
        parameters: Dict[str, Any] = {
            "type": "object",
            "properties": {},
            "required": [],
        }
        for param_name, param in sig.parameters.items():
            info: Dict[str, Any] = {"type": "string"}
            if param.annotation != inspect.Parameter.empty:
                info["type"] = _get_json_schema_type(param.annotation)
            if param.default is not inspect.Parameter.empty:
                info["default"] = param.default
            parameters["properties"][param_name] = info
            if param.default is inspect.Parameter.empty:
                parameters["required"].append(param_name)

        entry = Family(
            kind=kind,
            name=family_name,
            func=f,
            description=(f.__doc__ or "").strip().split("\n")[0],
            parameters=parameters,
        )
        key = (kind, family_name)
        if key in _REGISTRY:
            logger.warning(
                f"{kind} family '{family_name}' already registered, replacing"
            )
        _REGISTRY[key] = entry
        setattr(f, "_family", entry)
        return f

    return decorator


def get_family(kind: str, name: str) -> Family:
    """Look up a registered generator."""
    _load_builtin()
    try:
        return _REGISTRY[(kind, name)]
    except KeyError as exc:
        known = sorted(n for k, n in _REGISTRY if k == kind)
        raise FamilyError(f"Unknown {kind} family '{name}'; known: {known}") from exc


def list_families(kind: Optional[str] = None) -> List[Family]:
    _load_builtin()
    return [f for (k, _), f in sorted(_REGISTRY.items()) if kind is None or k == kind]


def _load_builtin() -> None:
    from . import families  # noqa: F401  (registers on import)


def _get_json_schema_type(python_type: Type[Any]) -> str:
    """Convert Python type to JSON schema type string."""
    type_map: Dict[Any, str] = {
        str: "string",
        int: "integer",
        float: "number",
        bool: "boolean",
        list: "array",
        dict: "object",
    }

    origin = get_origin(python_type)
    if origin is not None:
        args = get_args(python_type)
        if origin in (list, List, tuple, Tuple):
            return "array"
        if origin in (dict, Dict):
            return "object"
        if origin is Literal:
            return "string"
        if origin is Union:
            non_none = [arg for arg in args if arg is not type(None)]
            if len(non_none) == 1:
                return _get_json_schema_type(non_none[0])
            return "string"

    return type_map.get(python_type, "string")


def _is_instance_of_type(value: Any, expected_type: Type[Any]) -> bool:
    """Best-effort runtime check; ints are accepted where floats are expected."""
    origin = get_origin(expected_type)
    args = get_args(expected_type)

    if origin is None:
        if expected_type is float:
            return isinstance(value, (int, float)) and not isinstance(value, bool)
        if isinstance(expected_type, type):
            return isinstance(value, expected_type)
        return True

    if origin is Union:
        if value is None and type(None) in args:
            return True
        return any(
            _is_instance_of_type(value, arg) for arg in args if arg is not type(None)
        )

    if origin is Literal:
        return value in args

    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            return False
        if args and args[-1] is not Ellipsis:
            return all(_is_instance_of_type(v, args[0]) for v in list(value)[:5])
        return True

    if origin is dict:
        return isinstance(value, dict)

    return True
