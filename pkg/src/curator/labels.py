"""The ten Roman-numeral class labels, in fixed order."""

CLASS_LABELS = ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix", "x")

_LABEL_INDEX = {label: i for i, label in enumerate(CLASS_LABELS)}


def is_class_label(value: str) -> bool:
    return value in _LABEL_INDEX


def class_index(label: str) -> int:
    try:
        return _LABEL_INDEX[label]
    except KeyError:
        raise ValueError(f"unknown class label: {label}") from None


def check_label(label: str) -> str:
    class_index(label)
    return label
