#!/usr/bin/env python3
"""Independent PE32 header-offset calculator.

Builds the two-section PE32 fixture used by tests/test_pe.cpp from first
principles (struct offsets computed here, not shared with the C++ code)
and prints the field offsets plus a digest of the resulting bytes, so the
C++ fixture can be cross-checked against an independent construction.
"""
import hashlib
import struct
import sys

FILE_ALIGN = 512
SECT_ALIGN = 4096
IMAGE_BASE = 0x00400000


def build_fixture():
    # Two sections, one page of 0x41 and one page of 0x42.
    text = bytes([0x41]) * 4096
    data = bytes([0x42]) * 4096
    nsections = 2
    e_lfanew = 64
    opt_size = 224
    sect_table_off = e_lfanew + 4 + 20 + opt_size
    headers_end = sect_table_off + 40 * nsections
    assert headers_end <= FILE_ALIGN, headers_end
    entry_rva = 0x1000 + 0x20

    dos = bytearray(64)
    dos[0:2] = b"MZ"
    dos[0x3C:0x40] = struct.pack("<I", e_lfanew)

    coff = struct.pack("<HHIIIHH", 0x014C, nsections, 0, 0, 0, opt_size, 0x0102)

    opt = bytearray(opt_size)
    struct.pack_into("<H", opt, 0, 0x010B)           # magic: PE32
    struct.pack_into("<I", opt, 16, entry_rva)        # AddressOfEntryPoint
    struct.pack_into("<I", opt, 28, IMAGE_BASE)       # ImageBase
    struct.pack_into("<I", opt, 32, SECT_ALIGN)
    struct.pack_into("<I", opt, 36, FILE_ALIGN)
    struct.pack_into("<I", opt, 56, SECT_ALIGN + 2 * SECT_ALIGN)  # SizeOfImage
    struct.pack_into("<I", opt, 60, FILE_ALIGN)       # SizeOfHeaders
    struct.pack_into("<H", opt, 68, 2)                # subsystem: GUI
    struct.pack_into("<I", opt, 92, 16)               # NumberOfRvaAndSizes

    def section(name, vsize, va, rsize, roff, chars):
        return struct.pack("<8sIIII12xI", name, vsize, va, rsize, roff, chars)

    sects = section(b".text", 4096, 0x1000, len(text), FILE_ALIGN, 0x60000020)
    sects += section(b".data", 4096, 0x2000, len(data), FILE_ALIGN + len(text), 0xC0000040)

    img = bytearray()
    img += dos
    img += b"PE\0\0"
    img += coff
    img += opt
    img += sects
    img += bytes(FILE_ALIGN - len(img))
    img += text
    img += data
    return bytes(img), entry_rva, sect_table_off


def main():
    img, entry_rva, sect_off = build_fixture()
    print(f"size={len(img)}")
    print(f"entry_rva=0x{entry_rva:x}")
    print(f"section_table_offset={sect_off}")
    print(f"text_raw=[512,{512+4096})  data_raw=[{512+4096},{512+8192})")
    print(f"sha256={hashlib.sha256(img).hexdigest()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
