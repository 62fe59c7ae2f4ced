"""Dalvik opcode -> instruction width (16-bit code units).

Only widths and the invoke family matter for call extraction; every other
instruction is skipped by its width.
"""

INVOKE = frozenset(range(0x6E, 0x73))          # invoke-virtual .. invoke-interface (35c)
INVOKE_RANGE = frozenset(range(0x74, 0x79))    # the /range forms (3rc)
INVOKE_POLYMORPHIC = frozenset((0xFA, 0xFB))   # 45cc / 4rcc, method ref in unit 1
INVOKE_CUSTOM = frozenset((0xFC, 0xFD))        # 35c / 3rc, call-site ref in unit 1

METHOD_REF_OPS = INVOKE | INVOKE_RANGE | INVOKE_POLYMORPHIC

# pseudo-instruction identifiers (full first code unit, opcode byte 0x00)
PACKED_SWITCH_PAYLOAD = 0x0100
SPARSE_SWITCH_PAYLOAD = 0x0200
FILL_ARRAY_DATA_PAYLOAD = 0x0300


def _build_widths():
    w = [1] * 256
    spans = [
        ((0x02, 0x02), 2), ((0x03, 0x03), 3),
        ((0x05, 0x05), 2), ((0x06, 0x06), 3),
        ((0x08, 0x08), 2), ((0x09, 0x09), 3),
        ((0x13, 0x13), 2), ((0x14, 0x14), 3), ((0x15, 0x16), 2), ((0x17, 0x17), 3),
        ((0x18, 0x18), 5), ((0x19, 0x1A), 2), ((0x1B, 0x1B), 3), ((0x1C, 0x1C), 2),
        ((0x1F, 0x20), 2), ((0x22, 0x23), 2), ((0x24, 0x26), 3),
        ((0x29, 0x29), 2), ((0x2A, 0x2C), 3),
        ((0x2D, 0x3D), 2),
        ((0x44, 0x6D), 2),
        ((0x6E, 0x72), 3), ((0x74, 0x78), 3),
        ((0x90, 0xAF), 2),
        ((0xD0, 0xE2), 2),
        ((0xFA, 0xFB), 4), ((0xFC, 0xFD), 3), ((0xFE, 0xFF), 2),
    ]
    for (lo, hi), width in spans:
        for op in range(lo, hi + 1):
            w[op] = width
    return tuple(w)


WIDTHS = _build_widths()


def payload_width(units, pos: int) -> int | None:
    """Width of a switch/array payload starting at ``pos``, or None if not a payload."""
    ident = units[pos]
    if ident == PACKED_SWITCH_PAYLOAD:
        return units[pos + 1] * 2 + 4
    if ident == SPARSE_SWITCH_PAYLOAD:
        return units[pos + 1] * 4 + 2
    if ident == FILL_ARRAY_DATA_PAYLOAD:
        elem_width = units[pos + 1]
        size = units[pos + 2] | (units[pos + 3] << 16)
        return (elem_width * size + 1) // 2 + 4
    return None
