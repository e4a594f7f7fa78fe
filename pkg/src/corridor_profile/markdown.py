"""Markdown report pages: a run details list followed by renderer output."""

from collections.abc import Mapping
from pathlib import Path
from typing import TYPE_CHECKING, Any, Optional

from .delimited import format_value
from .exceptions import MissingPlaceholderError

if TYPE_CHECKING:
    from .base import Renderer, StrPath


PAGE_MARKDOWN = """# Corridor Profile Report
{details}
{renderers}
"""


class Markdown:
    RENDERERS_PLACEHOLDER = "{renderers}"
    # optional; templates without it simply omit the run details
    DETAILS_PLACEHOLDER = "{details}"

    def __init__(self, template: Optional[str] = None):
        template = template or PAGE_MARKDOWN
        if self.RENDERERS_PLACEHOLDER not in template:
            raise MissingPlaceholderError(self.RENDERERS_PLACEHOLDER, "Markdown")

        self.template = template
        self.details: list[str] = []
        self.elements: list[str] = []

    def with_details(self, details: Mapping[str, Any]) -> "Markdown":
        "Adds one `- **key**: value` line per entry."
        self.details.extend(
            f"- **{key}**: {format_value(value) or '-'}" for key, value in details.items()
        )
        return self

    def with_element(self, md: str) -> "Markdown":
        "Adds a rendered element."
        self.elements.append(md)
        return self

    def embed(self) -> str:
        details = "\n" + "\n".join(self.details) + "\n" if self.details else ""
        return self.template.replace(self.DETAILS_PLACEHOLDER, details).replace(
            self.RENDERERS_PLACEHOLDER, "\n".join(self.elements)
        )


def render_markdown(
    renderers: list["Renderer"],
    output_file: Optional["StrPath"] = None,
    template_path: Optional["StrPath"] = None,
    details: Optional[Mapping[str, Any]] = None,
) -> "StrPath":
    """Fill a report template with `details` and `renderers`.

    Returns `output_file` after writing it, or the document itself when no
    output file is given (images are then inlined as base64).
    """
    output_path = Path(output_file) if output_file else None
    if output_path:
        output_path.parent.mkdir(parents=True, exist_ok=True)

    page = Path(template_path).read_text(encoding="utf-8") if template_path else None
    document = Markdown(page).with_details(details or {})
    for renderer in renderers:
        document.with_element(renderer.generate_markdown(report_path=output_path))

    if output_path is None:
        return document.embed()
    output_path.write_text(document.embed(), encoding="utf-8")
    return output_path
