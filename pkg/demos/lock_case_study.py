# %% [markdown]
# # Keypad lock: from an unlabeled header to the programming code
#
# A 7-pin header sits next to the lock's MCU. Diode-mode readings give the
# pin-out, JTAG enumeration confirms it, and a read of information memory
# yields the codes in the clear.

# %%
from unattended import fixtures
from unattended.jtag import Cable, count_assignments, enumerate_pins, read_idcode, read_memory
from unattended.pinout import infer_pinout
from unattended.pipeline import scan_codes

# %% [markdown]
# ## Pin-out from the continuity matrix

# %%
matrix = fixtures.jt1_matrix()
print(matrix.to_csv())
pins = infer_pinout(matrix)
for pin, signal in pins.assignment.items():
    print(f"{pin:6} {signal}")

# %% [markdown]
# ## Cross-check with JTAG enumeration
#
# Every ordered choice of four of the seven pins as TCK/TMS/TDI/TDO is tried;
# only the real wiring returns a plausible IDCODE and echoes through BYPASS.

# %%
lock = fixtures.lock_fixture()
print("assignments to try:", count_assignments(7))
hits = enumerate_pins(lock, range(1, 8))
for h in hits:
    print(h.to_dict())

# %% [markdown]
# The same sweep against a part whose security fuse has been blown finds nothing.

# %%
print("fuse blown:", enumerate_pins(fixtures.lock_fixture(fuse_blown=True), range(1, 8)))

# %% [markdown]
# ## Read information memory and look for codes

# %%
cable = Cable.direct(lock)
print(f"IDCODE {read_idcode(cable):#010x}")
segment = read_memory(cable, 0x1000, 256)
codes = scan_codes(segment, base=0x1000)
print("programming code:", codes.programming_code)
print("user codes:", codes.user_codes)

# %% [markdown]
# After the owner adds a user and changes the programming code, a second read
# shows the new state.

# %%
updated = fixtures.lock_fixture(updated=True)
codes = scan_codes(read_memory(Cable.direct(updated), 0x1000, 256), base=0x1000)
print("programming code:", codes.programming_code)
print("user codes:", codes.user_codes)
