//! Enumeration of the analysis variables: the dummy expansion of the
//! categorical contract attributes, the numeric contract variables, and the
//! buyer-feature variables.

use crate::derive::{AnnotatedContract, BuyerStats};
use crate::ingest::{ContractType, CuratedContract, GovOrder, ProcChar, ProcType, SupplierSize};

/// 0/1 indicator variables expanded from the categorical fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DummyVar {
    GoApf,
    GoGe,
    GoGm,
    PcN,
    PcI,
    PcItlc,
    CtOp,
    CtS,
    CtAdq,
    CtAr,
    CtSlaop,
    PtAd,
    PtLp,
    PtI3p,
    SMic,
    SPeq,
    SMed,
    SNom,
    SNa,
}

impl DummyVar {
    pub const ALL: [DummyVar; 19] = [
        DummyVar::GoApf,
        DummyVar::GoGe,
        DummyVar::GoGm,
        DummyVar::PcN,
        DummyVar::PcI,
        DummyVar::PcItlc,
        DummyVar::CtOp,
        DummyVar::CtS,
        DummyVar::CtAdq,
        DummyVar::CtAr,
        DummyVar::CtSlaop,
        DummyVar::PtAd,
        DummyVar::PtLp,
        DummyVar::PtI3p,
        DummyVar::SMic,
        DummyVar::SPeq,
        DummyVar::SMed,
        DummyVar::SNom,
        DummyVar::SNa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DummyVar::GoApf => "GO.APF",
            DummyVar::GoGe => "GO.GE",
            DummyVar::GoGm => "GO.GM",
            DummyVar::PcN => "PC.N",
            DummyVar::PcI => "PC.I",
            DummyVar::PcItlc => "PC.ITLC",
            DummyVar::CtOp => "CT.OP",
            DummyVar::CtS => "CT.S",
            DummyVar::CtAdq => "CT.ADQ",
            DummyVar::CtAr => "CT.AR",
            DummyVar::CtSlaop => "CT.SLAOP",
            DummyVar::PtAd => "PT.AD",
            DummyVar::PtLp => "PT.LP",
            DummyVar::PtI3p => "PT.I3P",
            DummyVar::SMic => "S.MIC",
            DummyVar::SPeq => "S.PEQ",
            DummyVar::SMed => "S.MED",
            DummyVar::SNom => "S.NOM",
            DummyVar::SNa => "S.NA",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(name.trim()))
    }

    pub fn is_set(self, c: &CuratedContract) -> bool {
        match self {
            DummyVar::GoApf => c.go == GovOrder::Apf,
            DummyVar::GoGe => c.go == GovOrder::Ge,
            DummyVar::GoGm => c.go == GovOrder::Gm,
            DummyVar::PcN => c.pc == ProcChar::N,
            DummyVar::PcI => c.pc == ProcChar::I,
            DummyVar::PcItlc => c.pc == ProcChar::Itlc,
            DummyVar::CtOp => c.ct == ContractType::Op,
            DummyVar::CtS => c.ct == ContractType::S,
            DummyVar::CtAdq => c.ct == ContractType::Adq,
            DummyVar::CtAr => c.ct == ContractType::Ar,
            DummyVar::CtSlaop => c.ct == ContractType::Slaop,
            DummyVar::PtAd => c.pt == ProcType::Ad,
            DummyVar::PtLp => c.pt == ProcType::Lp,
            DummyVar::PtI3p => c.pt == ProcType::I3p,
            DummyVar::SMic => c.size == SupplierSize::Mic,
            DummyVar::SPeq => c.size == SupplierSize::Peq,
            DummyVar::SMed => c.size == SupplierSize::Med,
            DummyVar::SNom => c.size == SupplierSize::Nom,
            DummyVar::SNa => c.size == SupplierSize::Na,
        }
    }
}

/// Numeric per-contract variables: the contract features and the attached
/// relation risk factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NumericVar {
    BeginningWeek,
    EbWeeks,
    Spending,
    Rad,
    Fav,
    Cpw,
    Spw,
}

impl NumericVar {
    /// Contract-feature variables (type i).
    pub const CONTRACT: [NumericVar; 3] = [NumericVar::BeginningWeek, NumericVar::EbWeeks, NumericVar::Spending];
    /// Relation risk factors (type iii).
    pub const FACTORS: [NumericVar; 4] = [NumericVar::Rad, NumericVar::Fav, NumericVar::Cpw, NumericVar::Spw];

    pub fn name(self) -> &'static str {
        match self {
            NumericVar::BeginningWeek => "BeginningWeek",
            NumericVar::EbWeeks => "EBWeeks",
            NumericVar::Spending => "Spending",
            NumericVar::Rad => "RAD",
            NumericVar::Fav => "Fav",
            NumericVar::Cpw => "CPW",
            NumericVar::Spw => "SPW",
        }
    }

    pub fn value(self, a: &AnnotatedContract) -> f64 {
        match self {
            NumericVar::BeginningWeek => a.contract.beginning_week as f64,
            NumericVar::EbWeeks => a.contract.eb_weeks as f64,
            NumericVar::Spending => a.contract.spending_usd_ppp,
            NumericVar::Rad => a.rad,
            NumericVar::Fav => a.fav,
            NumericVar::Cpw => a.cpw,
            NumericVar::Spw => a.spw,
        }
    }
}

/// Buyer-feature variables (type ii); their samples range over buyers, not
/// contracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuyerVar {
    TContMax,
    TSpendingMax,
}

impl BuyerVar {
    pub const ALL: [BuyerVar; 2] = [BuyerVar::TContMax, BuyerVar::TSpendingMax];

    pub fn name(self) -> &'static str {
        match self {
            BuyerVar::TContMax => "T.Cont.Max",
            BuyerVar::TSpendingMax => "T.Spending.Max",
        }
    }

    pub fn value(self, b: &BuyerStats) -> f64 {
        match self {
            BuyerVar::TContMax => b.t_cont_max as f64,
            BuyerVar::TSpendingMax => b.t_spending_max,
        }
    }
}
