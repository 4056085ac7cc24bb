"""Smoke test for the zkpc extension: prove, verify, tamper."""

import zkpc

image = zkpc.GuestImage.exprcc()
image_id = image.image_id
source = b"let x = 6; print x * 7;"

receipt = zkpc.prove(image, source, samples=16)
assert receipt.output == b"PUSH 6\nSTORE 0\nLOAD 0\nPUSH 7\nMUL\nPRINT\nHALT\n", receipt.output
assert zkpc.stackvm_run(receipt.output) == b"42\n"
assert receipt.output == zkpc.reference_compile(source)[0]

report = zkpc.verify(receipt, image_id, source, image)
assert report.accepted, report
assert zkpc.verify_full(receipt, image_id, source, image).accepted

tampered = zkpc.verify(receipt, image_id, source + b" ", image)
assert tampered.failure_class == "SourceDigestMismatch", tampered

data = receipt.to_bytes()
assert zkpc.Receipt.from_bytes(data).to_bytes() == data
assert zkpc.verify_bytes(data[:50], image_id, source, image).failure_class == "MalformedReceipt"

rebuilt = zkpc.GuestImage.from_bytes(image.to_bytes())
assert rebuilt.image_id == image_id

try:
    zkpc.prove(image, b"print (1+;")
except RuntimeError as e:
    assert "exited with code 1" in str(e)
else:
    raise AssertionError("malformed source produced a receipt")

program = zkpc.gen_program(0, 5)
assert zkpc.gen_program(0, 5) == program
out, code, steps = zkpc.run(image, program.encode())
assert code == 0 and out.endswith(b"HALT\n") and steps > 0

print(f"ok: image {image_id[:16]}..., {receipt!r}, {report}")
