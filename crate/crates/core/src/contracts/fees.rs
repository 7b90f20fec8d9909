//! Basis-point arithmetic and configurable rates.

use serde::{Deserialize, Serialize};

pub const BPS_DENOMINATOR: u64 = 10_000;

/// `floor(value × bps / 10000)`, computed without overflow.
pub fn bps_of(value: u64, bps: u32) -> u64 {
    (value as u128 * bps as u128 / BPS_DENOMINATOR as u128) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub commission_bps: u32,
    pub tax_bps: u32,
    pub withdrawal_fine_bps: u32,
    pub offer_deposit_bps: u32,
    /// Share of a losing bidder's deposit kept as the gas fee on refund.
    pub gas_fee_share_bps: u32,
    pub last_minutes_window: u64,
    pub payment_timeout: u64,
    pub presentation_validity: u64,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            commission_bps: 250,
            tax_bps: 100,
            withdrawal_fine_bps: 5000,
            offer_deposit_bps: 100,
            gas_fee_share_bps: 1000,
            last_minutes_window: 10,
            payment_timeout: 50,
            presentation_validity: 20,
        }
    }
}

impl Rates {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("commission_bps", self.commission_bps),
            ("tax_bps", self.tax_bps),
            ("withdrawal_fine_bps", self.withdrawal_fine_bps),
            ("offer_deposit_bps", self.offer_deposit_bps),
            ("gas_fee_share_bps", self.gas_fee_share_bps),
        ] {
            if v as u64 > BPS_DENOMINATOR {
                return Err(format!("{name} = {v} exceeds {BPS_DENOMINATOR}"));
            }
        }
        if (self.commission_bps + self.tax_bps) as u64 > BPS_DENOMINATOR {
            return Err("commission plus tax exceeds the sale amount".into());
        }
        Ok(())
    }

    pub fn deposit_for(&self, amount: u64) -> u64 {
        bps_of(amount, self.offer_deposit_bps)
    }

    pub fn withdrawal_fine(&self, deposit: u64) -> u64 {
        bps_of(deposit, self.withdrawal_fine_bps)
    }

    pub fn gas_fee(&self, deposit: u64) -> u64 {
        bps_of(deposit, self.gas_fee_share_bps)
    }

    pub fn split(&self, amount: u64) -> Split {
        let commission = bps_of(amount, self.commission_bps);
        let tax = bps_of(amount, self.tax_bps);
        Split {
            commission,
            tax,
            to_owner: amount - commission - tax,
        }
    }
}

/// Division of a sale amount. Flooring residue stays with the owner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub commission: u64,
    pub tax: u64,
    pub to_owner: u64,
}
