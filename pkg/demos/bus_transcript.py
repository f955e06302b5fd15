# %% [markdown]
# # Rebuilding a flash image from a sniffed SPI bus
#
# Instead of reading the chip ourselves, we record what the SoC reads at boot
# and reassemble the bytes it fetched. Only what was read can be recovered.

# %%
import random

from unattended import fixtures
from unattended.spi import (FlashDevice, Opcode, SimulatedDriver, SpiCommand, Transcript, encode_command,
                            reconstruct_from_transcript)

cam = fixtures.camera_fixture()
geometry = cam.image.geometry
device = FlashDevice(cam.image)
driver = SimulatedDriver(device)

# %% [markdown]
# ## A boot-time access pattern
#
# ID and status queries, then the bootloader, the kernel and a few config reads.

# %%
transcript = Transcript()


def issue(cmd):
    mosi = encode_command(cmd, geometry)
    transcript.append(mosi, driver.transfer(mosi), geometry)


issue(SpiCommand(Opcode.RDID, None, 3))
issue(SpiCommand(Opcode.RDSR, None, 1))
for off in range(0, 0x20000, 0x1000):
    issue(SpiCommand(Opcode.READ, off, 0x1000))
for off in range(0x100000, 0x140000, 0x8000):
    issue(SpiCommand(Opcode.FAST_READ, off, 0x8000))
rng = random.Random(3)
for _ in range(8):
    issue(SpiCommand(Opcode.READ, 0x40000 + 8 * rng.randrange(0x2000), 64))

print(transcript.dumps().splitlines()[0][:160], "...")
print(len(transcript.transactions), "transactions")

# %% [markdown]
# ## Reconstruct

# %%
image, coverage = reconstruct_from_transcript(transcript, geometry)
print(f"coverage {coverage.fraction:.2%}")
for start, end in coverage.ranges()[:6]:
    same = image.data[start:end] == cam.image.data[start:end]
    print(f"{start:#08x}-{end:#08x} matches the chip: {same}")
