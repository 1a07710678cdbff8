import typing
from typing import Any, Dict

import inflection
import pydantic
from typing_extensions import Self as SelfType

from metaimpute.exceptions import ParseError
from metaimpute.utils import format_float


class ConfigModel(pydantic.BaseModel):
    """
    Base model for every configuration object.

    Field names are snake_case in Python and dashed in files and on the command
    line (``inner_steps`` is written ``inner-steps``). Unknown keys are rejected.
    """

    model_config = pydantic.ConfigDict(
        extra="forbid",
        frozen=True,
        alias_generator=inflection.dasherize,
        populate_by_name=True,
    )

    @pydantic.field_validator("*", mode="before")
    @classmethod
    def _split_sequences(cls, value: Any, info: pydantic.ValidationInfo) -> Any:
        # "1e-3,1e-2" from a text file or flag becomes a sequence
        if not isinstance(value, str) or info.field_name is None:
            return value
        annotation = cls.model_fields[info.field_name].annotation
        if typing.get_origin(annotation) in (list, tuple):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    def to_text(self) -> str:
        """
        Canonical ``key=value`` lines, sorted by key, floats at full precision.
        """
        items = sorted(
            (field.alias or name, getattr(self, name))
            for name, field in type(self).model_fields.items()
        )
        return "".join(f"{key}={_format_value(value)}\n" for key, value in items)

    @classmethod
    def from_text(cls, text: str, path: str = "") -> SelfType:
        """
        Parse the output of :meth:`to_text`. Blank lines and ``#`` comments are skipped.
        """
        data: Dict[str, str] = {}
        for number, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError("expected key=value", path=path, line_number=number)
            data[key.strip()] = value.strip()
        return cls.model_validate(data)

    def replace(self, **changes: Any) -> SelfType:
        """
        Return a validated copy with some fields changed.
        """
        return type(self).model_validate({**self.model_dump(), **changes})


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(item) for item in value)
    return str(value)
