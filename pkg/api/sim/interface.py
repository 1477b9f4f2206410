"""Observation/action bottlenecks, capacities and purchasable interface upgrades."""

import logging

from pydantic import BaseModel, ConfigDict, Field, model_validator

from api.errors import ConfigError, InvalidActionError

logger = logging.getLogger(__name__)

INTERFACE_KINDS = ("none", "widen_patch", "reduce_noise", "unlock_actions", "raise_compute")


class BottleneckConfig(BaseModel):
    """Interface parameters b_O and b_A."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    coarsen_k: int = Field(1, ge=1)
    noise_eps: float = Field(0.0, ge=0.0, le=1.0)
    latency_ticks: int = Field(0, ge=0)
    patch_radius: int = Field(1, ge=0)
    action_cardinality: int = Field(5, ge=1)
    slip_prob: float = Field(0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_pooling(self):
        if self.patch_side % self.coarsen_k != 0:
            raise ValueError(
                f"coarsen_k={self.coarsen_k} must divide the patch side {self.patch_side}"
            )
        return self

    @property
    def patch_side(self) -> int:
        return 2 * self.patch_radius + 1

    @property
    def blocks_per_side(self) -> int:
        return self.patch_side // self.coarsen_k

    @property
    def token_count(self) -> int:
        """Pooled cells per observation: (2r+1)^2 / k^2."""
        return self.blocks_per_side ** 2


class CapacityState(BaseModel):
    """Scalar capacities c^O, c^A, c^C."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    c_obs: int = Field(ge=0)
    c_act: int = Field(ge=0)
    c_compute: int = Field(ge=0)

    @classmethod
    def from_bottleneck(cls, b: BottleneckConfig, c_compute: int) -> "CapacityState":
        return cls(c_obs=b.token_count, c_act=b.action_cardinality, c_compute=c_compute)


class UpgradeOffer(BaseModel):
    """Price (``None`` = not for sale) and ceiling of one upgrade kind."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    price: float | None = Field(1.0, ge=0.0)
    ceiling: float = Field(ge=0.0)


class UpgradeCatalogue(BaseModel):
    """Ceilings: max patch radius, noise floor, max action cardinality, max compute per tick."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    widen_patch: UpgradeOffer = UpgradeOffer(price=2.0, ceiling=3)
    reduce_noise: UpgradeOffer = UpgradeOffer(price=1.0, ceiling=0.01)
    unlock_actions: UpgradeOffer = UpgradeOffer(price=1.0, ceiling=7)
    raise_compute: UpgradeOffer = UpgradeOffer(price=1.0, ceiling=8)

    def offer(self, kind: str) -> UpgradeOffer:
        if kind not in INTERFACE_KINDS[1:]:
            raise InvalidActionError(f"Unknown interface action kind: {kind}")
        return getattr(self, kind)

    def with_price(self, kind: str, price: float | None) -> "UpgradeCatalogue":
        offer = self.offer(kind).model_copy(update={"price": price})
        return self.model_copy(update={kind: offer})


class InterfaceAction(BaseModel):
    """V_t: an interface upgrade (or none) and the energy price it charges."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: str = "none"
    price: float = Field(0.0, ge=0.0)

    @classmethod
    def none(cls) -> "InterfaceAction":
        return cls()

    @classmethod
    def from_catalogue(cls, kind: str, catalogue: UpgradeCatalogue) -> "InterfaceAction":
        if kind == "none":
            return cls.none()
        offer = catalogue.offer(kind)
        if offer.price is None:
            logger.error(f"Interface action {kind} is not offered in the catalogue")
            raise InvalidActionError(f"Interface action {kind} is not offered in the catalogue")
        return cls(kind=kind, price=offer.price)


class InterfaceOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    capacity: CapacityState
    bottleneck: BottleneckConfig
    cost: float
    saturated: bool = False


def apply_interface_action(
    cap: CapacityState,
    b: BottleneckConfig,
    v: InterfaceAction,
    catalogue: UpgradeCatalogue,
    grid_size: int | None = None,
) -> InterfaceOutcome:
    """Apply one upgrade.

    Upgrades are monotone: widen_patch grows the radius by ``coarsen_k`` (1 at
    the default pooling) so pooling stays aligned, reduce_noise halves
    noise_eps, unlock_actions and raise_compute increment by one. An upgrade
    past its catalogue ceiling, or a patch that would outgrow ``grid_size``,
    is a free no-op flagged ``saturated``.
    """
    if v.kind == "none":
        return InterfaceOutcome(capacity=cap, bottleneck=b, cost=0.0)
    if v.kind not in INTERFACE_KINDS:
        raise InvalidActionError(f"Unknown interface action kind: {v.kind}")

    offer = catalogue.offer(v.kind)
    if offer.price is None:
        raise InvalidActionError(f"Interface action {v.kind} is not offered in the catalogue")

    new_b = b
    new_cap = cap
    if v.kind == "widen_patch":
        radius = b.patch_radius + b.coarsen_k
        if radius > offer.ceiling or (grid_size is not None and 2 * radius + 1 > grid_size):
            return _saturated(cap, b, v.kind)
        new_b = b.model_copy(update={"patch_radius": radius})
        new_cap = cap.model_copy(update={"c_obs": new_b.token_count})
    elif v.kind == "reduce_noise":
        if b.noise_eps <= offer.ceiling:
            return _saturated(cap, b, v.kind)
        new_b = b.model_copy(update={"noise_eps": b.noise_eps / 2.0})
    elif v.kind == "unlock_actions":
        if b.action_cardinality + 1 > offer.ceiling:
            return _saturated(cap, b, v.kind)
        new_b = b.model_copy(update={"action_cardinality": b.action_cardinality + 1})
        new_cap = cap.model_copy(update={"c_act": new_b.action_cardinality})
    elif v.kind == "raise_compute":
        if cap.c_compute + 1 > offer.ceiling:
            return _saturated(cap, b, v.kind)
        new_cap = cap.model_copy(update={"c_compute": cap.c_compute + 1})

    return InterfaceOutcome(capacity=new_cap, bottleneck=new_b, cost=offer.price)


def _saturated(cap: CapacityState, b: BottleneckConfig, kind: str) -> InterfaceOutcome:
    logger.info(f"Interface upgrade {kind} is saturated; no change and no charge")
    return InterfaceOutcome(capacity=cap, bottleneck=b, cost=0.0, saturated=True)


def check_catalogue(catalogue: UpgradeCatalogue, full_actions: int) -> None:
    """Raise ConfigError when a catalogue ceiling cannot be realised."""
    if catalogue.unlock_actions.ceiling > full_actions:
        raise ConfigError(
            f"unlock_actions ceiling {catalogue.unlock_actions.ceiling} exceeds the {full_actions} canonical actions"
        )
