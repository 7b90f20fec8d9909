//! External token balances. Contract escrow is held by each contract.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ContractError;
use crate::crypto::{digest, DigestId};

/// Account credited with transaction tax.
pub fn tax_authority_account() -> DigestId {
    digest(b"deedchain/tax-authority")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Treasury {
    balances: BTreeMap<DigestId, u64>,
    minted: u64,
}

impl Treasury {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates tokens. Only used when setting up a world.
    pub fn mint(&mut self, account: DigestId, amount: u64) {
        *self.balances.entry(account).or_default() += amount;
        self.minted += amount;
    }

    pub fn minted(&self) -> u64 {
        self.minted
    }

    pub fn balance(&self, account: &DigestId) -> u64 {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn balances(&self) -> &BTreeMap<DigestId, u64> {
        &self.balances
    }

    pub fn total(&self) -> u64 {
        self.balances.values().sum()
    }

    pub fn debit(&mut self, account: &DigestId, amount: u64) -> Result<(), ContractError> {
        let bal = self.balances.entry(*account).or_default();
        if *bal < amount {
            return Err(ContractError::InsufficientBalance {
                needed: amount,
                available: *bal,
            });
        }
        *bal -= amount;
        Ok(())
    }

    pub fn credit(&mut self, account: &DigestId, amount: u64) {
        *self.balances.entry(*account).or_default() += amount;
    }

    pub fn transfer(&mut self, from: &DigestId, to: &DigestId, amount: u64) -> Result<(), ContractError> {
        self.debit(from, amount)?;
        self.credit(to, amount);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transfer_preserves_total() {
        let (a, b) = (digest(b"a"), digest(b"b"));
        let mut t = Treasury::new();
        t.mint(a, 100);
        t.transfer(&a, &b, 40).unwrap();
        assert_eq!((t.balance(&a), t.balance(&b), t.total()), (60, 40, 100));
        assert!(matches!(
            t.transfer(&b, &a, 41),
            Err(ContractError::InsufficientBalance { needed: 41, available: 40 })
        ));
        assert_eq!(t.total(), t.minted());
    }
}
