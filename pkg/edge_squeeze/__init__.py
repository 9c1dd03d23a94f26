"""Edge Squeeze: a squeezed Xception toolkit for on-device defect detection."""

from .toolkit import EdgeSqueeze  # noqa
