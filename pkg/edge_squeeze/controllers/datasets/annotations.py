"""Readers for board annotations: the JSON schema and the VOC style XML subset."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union
from xml.parsers.expat import ExpatError

import xmltodict
from PIL import Image

from edge_squeeze.helpers.util import create_image_id
from edge_squeeze.models.dataset import AnnotatedImage, DefectBox
from edge_squeeze.models.enums import DefectClass
from edge_squeeze.models.errors import AnnotationError

LOGGER = logging.getLogger(__name__)

ANNOTATION_SUFFIXES = (".json", ".xml")


def _parse_box(raw: Dict[str, Any], label: str, width: int, height: int) -> DefectBox:
    """Validate one raw box (class name plus corners) against the image bounds."""
    try:
        class_name = DefectClass.parse(raw["class"])
    except ValueError as err:
        raise AnnotationError(f"{label}: unknown defect class {raw.get('class')!r}") from err
    except KeyError as err:
        raise AnnotationError(f"{label}: missing class name") from err
    try:
        x0, y0, x1, y1 = (float(raw[key]) for key in ("x0", "y0", "x1", "y1"))
    except KeyError as err:
        raise AnnotationError(f"{label}: missing coordinate {err}") from err
    except (TypeError, ValueError) as err:
        raise AnnotationError(f"{label}: coordinates must be numbers") from err
    if x0 >= x1 or y0 >= y1:
        raise AnnotationError(
            f"{label}: degenerate box ({x0}, {y0}, {x1}, {y1}), need x0 < x1 and y0 < y1"
        )
    if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
        raise AnnotationError(
            f"{label}: box ({x0}, {y0}, {x1}, {y1}) exceeds the {width}x{height} image"
        )
    return DefectBox(class_name, x0, y0, x1, y1)


def _image_size(image_path: Path, source: Path) -> Tuple[int, int]:
    """Read width and height from the image header when the annotation omits them."""
    try:
        with Image.open(image_path) as img:
            return img.size
    except OSError as err:
        raise AnnotationError(
            f"{source}: no image size given and {image_path} can not be read"
        ) from err


def _build_image(
    source: Path,
    image_name: Optional[str],
    width: Any,
    height: Any,
    raw_boxes: List[Tuple[str, Dict[str, Any]]],
) -> AnnotatedImage:
    """Create an AnnotatedImage from the fields both formats share."""
    if not image_name:
        raise AnnotationError(f"{source}: missing image file name")
    image_path = (source.parent / image_name).resolve()
    if width in (None, "") or height in (None, ""):
        width, height = _image_size(image_path, source)
    try:
        width, height = int(width), int(height)
    except (TypeError, ValueError) as err:
        raise AnnotationError(f"{source}: image size must be integers") from err
    if width <= 0 or height <= 0:
        raise AnnotationError(f"{source}: empty image size {width}x{height}")
    boxes = tuple(_parse_box(raw, f"{source} {label}", width, height) for label, raw in raw_boxes)
    return AnnotatedImage(
        image_id=create_image_id(Path(image_name).stem),
        image_path=str(image_path),
        width=width,
        height=height,
        boxes=boxes,
        annotation_path=str(source),
    )


def _parse_json_record(source: Path, record: Any) -> AnnotatedImage:
    """Parse one object of the JSON annotation schema."""
    if not isinstance(record, dict):
        raise AnnotationError(f"{source}: annotation record must be an object")
    raw_boxes = record.get("boxes") or []
    if not isinstance(raw_boxes, list) or not all(isinstance(x, dict) for x in raw_boxes):
        raise AnnotationError(f"{source}: 'boxes' must be a list of objects")
    return _build_image(
        source,
        record.get("image"),
        record.get("width"),
        record.get("height"),
        [(f"box {idx}", raw) for idx, raw in enumerate(raw_boxes)],
    )


def parse_json_annotation(path: Union[str, Path]) -> List[AnnotatedImage]:
    """Parse a JSON annotation file holding one record or a list of records."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as err:
        raise AnnotationError(f"{path}: malformed json: {err}") from err
    records = data if isinstance(data, list) else [data]
    return [_parse_json_record(path, record) for record in records]


def parse_voc_annotation(path: Union[str, Path]) -> List[AnnotatedImage]:
    """Parse the VOC subset: filename, size/{width,height} and object/{name,bndbox}."""
    path = Path(path)
    try:
        data = xmltodict.parse(path.read_bytes(), force_list=("object",))
    except ExpatError as err:
        raise AnnotationError(f"{path}: malformed xml: {err}") from err
    info = data.get("annotation") if isinstance(data, dict) else None
    if not isinstance(info, dict):
        raise AnnotationError(f"{path}: missing <annotation> root element")
    size = info.get("size") or {}
    raw_boxes = []
    for idx, obj in enumerate(info.get("object") or []):
        label = f"object {idx}"
        if not isinstance(obj, dict) or not isinstance(obj.get("bndbox"), dict):
            raise AnnotationError(f"{path} {label}: missing <bndbox>")
        bndbox = obj["bndbox"]
        label = f"object {idx} ({obj.get('name')})"
        raw_boxes.append(
            (
                label,
                {
                    "class": obj.get("name"),
                    "x0": bndbox.get("xmin"),
                    "y0": bndbox.get("ymin"),
                    "x1": bndbox.get("xmax"),
                    "y1": bndbox.get("ymax"),
                },
            )
        )
    return [
        _build_image(path, info.get("filename"), size.get("width"), size.get("height"), raw_boxes)
    ]


def parse_annotations(path: Union[str, Path]) -> List[AnnotatedImage]:
    """
    Parse annotations from a file or a directory of files.

    Directories are read in filename order, mixing .json and .xml files freely.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(
            (x for x in path.iterdir() if x.suffix.lower() in ANNOTATION_SUFFIXES),
            key=lambda x: x.name,
        )
    elif path.is_file():
        files = [path]
    else:
        raise AnnotationError(f"Annotation path does not exist: {path}")
    result: List[AnnotatedImage] = []
    for file in files:
        if file.suffix.lower() == ".xml":
            result += parse_voc_annotation(file)
        else:
            result += parse_json_annotation(file)
    seen = set()
    for image in result:
        if image.image_id in seen:
            raise AnnotationError(f"Image {image.image_id} is annotated more than once")
        seen.add(image.image_id)
    LOGGER.debug("Parsed %s annotated images from %s", len(result), path)
    return result
