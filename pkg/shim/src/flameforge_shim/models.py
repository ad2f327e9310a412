"""Model bundle behind the three endpoints.

``ModelBundle`` is the seam the server is tested through; ``RealModels``
lazy-loads SD v1.5 img2img (diffusers), CLIP (transformers), and an
Inception-v3 feature extractor (torchvision).  Loading happens on first use
so the server starts fast and tests can inject stubs.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

CLIP_DIM = 512
INCEPTION_DIM = 2048


class ModelBundle(Protocol):
    def generate(
        self,
        init_rgb: np.ndarray,
        prompt: str,
        negative_prompt: str,
        strength: float,
        guidance: float,
        steps: int,
        seed: int,
    ) -> np.ndarray: ...

    def embed_image(self, rgb: np.ndarray) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_inception(self, rgb: np.ndarray) -> np.ndarray: ...

    def model_ids(self) -> dict: ...


class ModelUnavailableError(RuntimeError):
    """A required model dependency or checkpoint is missing."""


class RealModels:
    def __init__(self, config):
        self.config = config
        self._sd = None
        self._clip = None
        self._clip_processor = None
        self._tokenizer = None
        self._inception = None

    def model_ids(self) -> dict:
        return {
            "diffusion": self.config.diffusion_model,
            "clip": self.config.clip_model,
            "inception": self.config.inception_model,
        }

    def _device(self):
        return self.config.resolved_device()

    def _load_sd(self):
        if self._sd is None:
            try:
                import torch
                from diffusers import StableDiffusionImg2ImgPipeline
            except ImportError as exc:
                raise ModelUnavailableError(
                    "diffusers/torch not installed; install flameforge-shim[models]"
                ) from exc
            dtype = torch.float16 if self._device() == "cuda" else torch.float32
            self._sd = StableDiffusionImg2ImgPipeline.from_pretrained(
                self.config.diffusion_model, torch_dtype=dtype, safety_checker=None
            ).to(self._device())
        return self._sd

    def _load_clip(self):
        if self._clip is None:
            try:
                from transformers import CLIPModel, CLIPProcessor
            except ImportError as exc:
                raise ModelUnavailableError(
                    "transformers not installed; install flameforge-shim[models]"
                ) from exc
            self._clip = CLIPModel.from_pretrained(self.config.clip_model).to(self._device())
            self._clip_processor = CLIPProcessor.from_pretrained(self.config.clip_model)
        return self._clip, self._clip_processor

    def _load_inception(self):
        if self._inception is None:
            try:
                import torch
                from torchvision import models
            except ImportError as exc:
                raise ModelUnavailableError(
                    "torchvision not installed; install flameforge-shim[models]"
                ) from exc
            net = models.inception_v3(weights="DEFAULT", aux_logits=True)
            net.fc = torch.nn.Identity()  # expose the 2048-d pool features
            net.eval().to(self._device())
            self._inception = net
        return self._inception

    def generate(self, init_rgb, prompt, negative_prompt, strength, guidance, steps, seed):
        import torch
        from PIL import Image

        pipe = self._load_sd()
        generator = torch.Generator(device=self._device()).manual_seed(seed)
        result = pipe(
            prompt=prompt,
            negative_prompt=negative_prompt or None,
            image=Image.fromarray(init_rgb),
            strength=strength,
            guidance_scale=guidance,
            num_inference_steps=steps,
            generator=generator,
        )
        return np.asarray(result.images[0].convert("RGB"))

    def embed_image(self, rgb):
        import torch
        from PIL import Image

        clip, processor = self._load_clip()
        inputs = processor(images=Image.fromarray(rgb), return_tensors="pt").to(self._device())
        with torch.no_grad():
            feats = clip.get_image_features(**inputs)
        return feats[0].cpu().numpy().astype(np.float64)

    def embed_text(self, text):
        import torch

        clip, processor = self._load_clip()
        inputs = processor(text=[text], return_tensors="pt", padding=True, truncation=True).to(
            self._device()
        )
        with torch.no_grad():
            feats = clip.get_text_features(**inputs)
        return feats[0].cpu().numpy().astype(np.float64)

    def embed_inception(self, rgb):
        import torch
        from PIL import Image
        from torchvision import transforms

        net = self._load_inception()
        prep = transforms.Compose(
            [
                transforms.Resize((299, 299)),
                transforms.ToTensor(),
                transforms.Normalize(mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]),
            ]
        )
        batch = prep(Image.fromarray(rgb)).unsqueeze(0).to(self._device())
        with torch.no_grad():
            feats = net(batch)
        return feats[0].cpu().numpy().astype(np.float64)
