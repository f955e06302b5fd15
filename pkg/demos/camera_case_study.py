# %% [markdown]
# # IP camera: SPI flash dump to a cracked account password
#
# The flash is read out over SPI, scanned for structure and entropy, and the
# encrypted user-config partition is decrypted with a key derived from the
# model string that sits elsewhere in the same image.

# %%
import numpy as np

from unattended import fixtures
from unattended.carver import Region, carve, entropy_profile, find_string, high_entropy_regions, scan_signatures
from unattended.pipeline import decrypt_partition, derive_des_key, extract_config
from unattended.rainbow import dictionary_attack
from unattended.spi import FlashDevice, SimulatedDriver, dump_image

# %% [markdown]
# ## Dump the chip

# %%
cam = fixtures.camera_fixture()
image, transcript = dump_image(SimulatedDriver(FlashDevice(cam.image)), cam.image.geometry, 4096)
print(f"{len(image.data):#x} bytes in {len(transcript.transactions)} READ frames")

# %% [markdown]
# With the SoC still running it fights the programmer for the bus and the
# readout is garbage; holding it in reset avoids that.

# %%
noisy, _ = dump_image(SimulatedDriver(FlashDevice(cam.image, bus_contention=True)), cam.image.geometry, 4096)
diff = np.frombuffer(noisy.data, np.uint8) != np.frombuffer(cam.image.data, np.uint8)
print(f"with contention: {diff.mean():.1%} of bytes wrong")

# %% [markdown]
# ## Map the image

# %%
for r in scan_signatures(image):
    if r.kind != "zlib":  # header-only zlib hits are frequent in random data
        print(f"{r.start:#08x} {r.kind}")

profile = entropy_profile(image)
print("windows above 7.5 bits/byte:", sum(h > 7.5 for _, h in profile))
for r in high_entropy_regions(image):
    print(f"high entropy {r.start:#08x}-{r.end:#08x}")

# %% [markdown]
# ## Decrypt the user config

# %%
partition = high_entropy_regions(image)[0]
model_at = find_string(image, fixtures.CAMERA_MODEL)[0]
model = carve(image, Region(model_at, model_at + 8, "string")).decode()
key = derive_des_key(model)
print(f"model {model!r} at {model_at:#x}, key 0x{key.hex()}")
plain = decrypt_partition(image, partition, key)
print(plain.decode())
config = extract_config(plain)
print(config)

# %% [markdown]
# ## Reverse the password hash

# %%
words = fixtures.camera_wordlist()
res = dictionary_attack(words, config.password_hash)
print(f"{config.username} / {res.plaintext}  after {res.work} guesses")
