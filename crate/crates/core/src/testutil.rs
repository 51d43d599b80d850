//! Constructors shared by the unit tests.

use crate::trace::{
    CeEvent, CellAddress, DataWidth, DimmId, DimmMeta, ErrorBitmap, Platform, UeEvent,
};

pub fn dimm(n: u16) -> DimmId {
    DimmId {
        server_id: format!("srv-{n:03}"),
        socket: 0,
        channel: n % 4,
        slot: 0,
    }
}

pub fn meta(id: &DimmId) -> DimmMeta {
    DimmMeta {
        dimm: id.clone(),
        manufacturer: "vendor-a".into(),
        data_width: DataWidth::X4,
        frequency_mts: 2933,
        chip_process: "1y".into(),
        platform: Platform::Purley,
    }
}

pub fn cell(device: u16, row: u32, column: u32) -> CellAddress {
    CellAddress {
        rank: 0,
        device,
        bank_group: 0,
        bank: 0,
        row,
        column,
    }
}

pub fn ce(id: &DimmId, ts: i64, c: CellAddress) -> CeEvent {
    let mut bm = ErrorBitmap::empty();
    bm.set(0, 1);
    CeEvent {
        ts_ms: ts,
        dimm: id.clone(),
        cell: c,
        bitmap: bm,
        count: 1,
    }
}

pub fn ce_with_bitmap(id: &DimmId, ts: i64, c: CellAddress, bitmap: ErrorBitmap) -> CeEvent {
    CeEvent {
        ts_ms: ts,
        dimm: id.clone(),
        cell: c,
        bitmap,
        count: 1,
    }
}

pub fn ue(id: &DimmId, ts: i64) -> UeEvent {
    UeEvent {
        ts_ms: ts,
        dimm: id.clone(),
        cell: None,
        sudden: false,
    }
}
