"""Hand-assembled DEX fixtures.

Every pool index and instruction unit below is written out literally; the
only computed things are section offsets, the checksum and the signature.
Run this file to regenerate the checked-in ``*.dex`` files.
"""
import hashlib
import os
import struct
import zlib

HERE = os.path.dirname(os.path.abspath(__file__))


def uleb(v):
    out = bytearray()
    while True:
        b = v & 0x7F
        v >>= 7
        out.append(b | (0x80 if v else 0))
        if not v:
            return bytes(out)


def assemble(strings, types, protos, methods, classes, codes):
    """classes: [(type_idx, direct [(method_idx, code_key)], virtual [method_idx])]
    codes: {code_key: (registers, [units])}
    """
    n_s, n_t, n_p, n_m, n_c = map(len, (strings, types, protos, methods, classes))
    off_s = 0x70
    off_t = off_s + 4 * n_s
    off_p = off_t + 4 * n_t
    off_m = off_p + 12 * n_p
    off_c = off_m + 8 * n_m
    data_off = off_c + 32 * n_c
    data = bytearray()

    code_off = {}
    for key, (regs, units) in codes.items():
        while len(data) % 4:
            data.append(0)
        code_off[key] = data_off + len(data)
        data += struct.pack("<HHHHII", regs, 0, 0, 0, 0, len(units))
        data += struct.pack(f"<{len(units)}H", *units)

    str_off = []
    for s in strings:
        str_off.append(data_off + len(data))
        data += uleb(len(s)) + s.encode("ascii") + b"\x00"

    class_data = []
    for _, direct, virtual in classes:
        if not direct and not virtual:
            class_data.append(0)
            continue
        class_data.append(data_off + len(data))
        data += uleb(0) + uleb(0) + uleb(len(direct)) + uleb(len(virtual))
        prev = 0
        for idx, key in direct:
            data += uleb(idx - prev) + uleb(0x9) + uleb(code_off[key])
            prev = idx
        prev = 0
        for idx in virtual:
            data += uleb(idx - prev) + uleb(0x401) + uleb(0)
            prev = idx

    while len(data) % 4:
        data.append(0)
    map_off = data_off + len(data)
    items = [(0x0000, 1, 0), (0x0001, n_s, off_s), (0x0002, n_t, off_t), (0x0003, n_p, off_p),
             (0x0005, n_m, off_m), (0x0006, n_c, off_c), (0x1000, 1, map_off)]
    items = [i for i in items if i[1]]
    data += struct.pack("<I", len(items))
    for typ, size, off in items:
        data += struct.pack("<HHII", typ, 0, size, off)

    body = b"".join(struct.pack("<I", o) for o in str_off)
    body += b"".join(struct.pack("<I", t) for t in types)
    body += b"".join(struct.pack("<III", *p) for p in protos)
    body += b"".join(struct.pack("<HHI", *m) for m in methods)
    for (type_idx, _, _), cd in zip(classes, class_data):
        object_type = types.index(strings.index("Ljava/lang/Object;"))
        body += struct.pack("<8I", type_idx, 1, object_type, 0, 0xFFFFFFFF, 0, cd, 0)

    size = data_off + len(data)
    header = b"dex\n035\x00" + bytes(24) + struct.pack(
        "<20I", size, 0x70, 0x12345678, 0, 0, map_off, n_s, off_s, n_t, off_t, n_p, off_p,
        0, 0, n_m, off_m, n_c, off_c, len(data), data_off)
    out = bytearray(header + body + data)
    out[12:32] = hashlib.sha1(bytes(out[32:])).digest()
    out[8:12] = struct.pack("<I", zlib.adler32(bytes(out[12:])))
    return bytes(out)


# Two classes, three methods (one abstract), assorted opcodes and payloads.
MAIN_STRINGS = [
    "Landroid/telephony/SmsManager;",  # 0
    "Lcom/fix/A;",                     # 1
    "Lcom/fix/B;",                     # 2
    "Ljava/lang/Object;",              # 3
    "V",                               # 4
    "a",                               # 5
    "b",                               # 6
    "c",                               # 7
    "hello",                           # 8
    "sendMultipartTextMessage",        # 9
    "sendTextMessage",                 # 10
]
MAIN_TYPES = [0, 1, 2, 3, 4]
MAIN_PROTOS = [(4, 4, 0)]
MAIN_METHODS = [
    (0, 0, 9),   # 0 SmsManager;->sendMultipartTextMessage
    (0, 0, 10),  # 1 SmsManager;->sendTextMessage
    (1, 0, 5),   # 2 A;->a
    (2, 0, 6),   # 3 B;->b
    (2, 0, 7),   # 4 B;->c (abstract)
]
MAIN_CODE_A = [
    0x0012,                          # 0  const/4 v0, #0
    0x011A, 0x0008,                  # 1  const-string v1, "hello"
    0x206E, 0x0001, 0x0001,          # 3  invoke-virtual {v1, v0}, sendTextMessage
    0x0018, 0x006E, 0x0001, 0x0000, 0x0000,  # 6  const-wide v0, (literal resembles an invoke)
    0x002B, 0x0007, 0x0000,          # 11 packed-switch v0, +7
    0x106E, 0x0000, 0x0000,          # 14 invoke-virtual {v0}, sendMultipartTextMessage
    0x000E,                          # 17 return-void
    0x0100, 0x0002, 0x0000, 0x0000,  # 18 packed-switch-payload, size 2, first_key 0
    0x006E, 0x0000, 0x0072, 0x0001,  # 22   targets that would decode as invokes
]
MAIN_CODE_B = [
    0x0071, 0x0002, 0x0000,          # 0  invoke-static {}, A;->a
    0x0026, 0x0007, 0x0000,          # 3  fill-array-data v0, +7
    0x0178, 0x0001, 0x0000,          # 6  invoke-interface/range {v0}, sendTextMessage
    0x000E,                          # 9  return-void
    0x0300, 0x0001, 0x0005, 0x0000,  # 10 fill-array-data-payload, width 1, 5 elements
    0x0072, 0x0001, 0x0000,          # 14   bytes 72 00 01 00 00 (+pad)
]
MAIN_CLASSES = [(1, [(2, "A.a")], []), (2, [(3, "B.b")], [4])]
MAIN_CODES = {"A.a": (2, MAIN_CODE_A), "B.b": (1, MAIN_CODE_B)}
MAIN_EXPECTED = [
    "android/telephony/SmsManager;->sendTextMessage",
    "android/telephony/SmsManager;->sendMultipartTextMessage",
    "com/fix/A;->a",
    "android/telephony/SmsManager;->sendTextMessage",
]

# Three classes, one call each, class_defs deliberately not in name order.
TRI_STRINGS = [
    "Landroid/location/LocationManager;",     # 0
    "Landroid/net/ConnectivityManager;",      # 1
    "Landroid/telephony/SmsManager;",         # 2
    "Lcom/fix/X0;",                           # 3
    "Lcom/fix/X1;",                           # 4
    "Lcom/fix/X2;",                           # 5
    "Ljava/lang/Object;",                     # 6
    "V",                                      # 7
    "getBestProvider",                        # 8
    "getNetworkInfo",                         # 9
    "m",                                      # 10
    "sendTextMessage",                        # 11
]
TRI_TYPES = list(range(8))
TRI_PROTOS = [(7, 7, 0)]
TRI_METHODS = [
    (0, 0, 8),   # 0 LocationManager;->getBestProvider
    (1, 0, 9),   # 1 ConnectivityManager;->getNetworkInfo
    (2, 0, 11),  # 2 SmsManager;->sendTextMessage
    (3, 0, 10),  # 3 X0;->m
    (4, 0, 10),  # 4 X1;->m
    (5, 0, 10),  # 5 X2;->m
]
TRI_CLASSES = [(5, [(5, "X2")], []), (3, [(3, "X0")], []), (4, [(4, "X1")], [])]
TRI_CODES = {
    "X0": (0, [0x0071, 0x0000, 0x0000, 0x000E]),   # invoke-static LocationManager;->getBestProvider
    "X1": (1, [0x1070, 0x0001, 0x0000, 0x000E]),   # invoke-direct {v0} ConnectivityManager;->getNetworkInfo
    "X2": (1, [0x106F, 0x0002, 0x0000, 0x000E]),   # invoke-super {v0} SmsManager;->sendTextMessage
}
TRI_EXPECTED = [
    "android/telephony/SmsManager;->sendTextMessage",
    "android/location/LocationManager;->getBestProvider",
    "android/net/ConnectivityManager;->getNetworkInfo",
]

# Classes whose only method is abstract: no code at all.
ABSTRACT_STRINGS = ["Lcom/fix/I;", "Ljava/lang/Object;", "V", "run"]
ABSTRACT_TYPES = [0, 1, 2]
ABSTRACT_PROTOS = [(2, 2, 0)]
ABSTRACT_METHODS = [(0, 0, 3)]
ABSTRACT_CLASSES = [(0, [], [0])]


def build_all():
    return {
        "main.dex": assemble(MAIN_STRINGS, MAIN_TYPES, MAIN_PROTOS, MAIN_METHODS, MAIN_CLASSES, MAIN_CODES),
        "three_classes.dex": assemble(TRI_STRINGS, TRI_TYPES, TRI_PROTOS, TRI_METHODS, TRI_CLASSES, TRI_CODES),
        "abstract.dex": assemble(ABSTRACT_STRINGS, ABSTRACT_TYPES, ABSTRACT_PROTOS, ABSTRACT_METHODS,
                                 ABSTRACT_CLASSES, {}),
    }


if __name__ == "__main__":
    for name, blob in build_all().items():
        with open(os.path.join(HERE, name), "wb") as fh:
            fh.write(blob)
        print(name, len(blob))
