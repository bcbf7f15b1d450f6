use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use super::{BankError, ItemBank};

struct Cell {
    writer: Mutex<()>,
    snapshot: RwLock<Arc<ItemBank>>,
}

/// Banks behind immutable snapshots. Writers run one transaction at a time
/// per bank on a copy; the copy replaces the snapshot only if it validates.
#[derive(Default)]
pub struct BankStore {
    banks: RwLock<BTreeMap<String, Arc<Cell>>>,
    dir: Option<PathBuf>,
}

impl BankStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads and persists bank files as `<dir>/<bank id>.json`.
    pub fn open(dir: &Path) -> Result<Self, BankError> {
        std::fs::create_dir_all(dir).map_err(|e| BankError::Io(e.to_string()))?;
        let store = BankStore { banks: RwLock::default(), dir: Some(dir.to_path_buf()) };
        for entry in std::fs::read_dir(dir).map_err(|e| BankError::Io(e.to_string()))?.flatten() {
            let path = entry.path();
            if path.extension().is_some_and(|e| e == "json") {
                let text = std::fs::read_to_string(&path).map_err(|e| BankError::Io(e.to_string()))?;
                store.put(ItemBank::import_json(&text)?);
            }
        }
        Ok(store)
    }

    fn put(&self, bank: ItemBank) {
        let cell = Cell { writer: Mutex::new(()), snapshot: RwLock::new(Arc::new(bank.clone())) };
        self.banks.write().unwrap().insert(bank.id.clone(), Arc::new(cell));
    }

    fn cell(&self, id: &str) -> Result<Arc<Cell>, BankError> {
        self.banks.read().unwrap().get(id).cloned().ok_or_else(|| BankError::UnknownBank(id.to_string()))
    }

    pub fn create(&self, bank: ItemBank) -> Result<Arc<ItemBank>, BankError> {
        bank.validate()?;
        let mut banks = self.banks.write().unwrap();
        if banks.contains_key(&bank.id) {
            return Err(BankError::BankExists(bank.id));
        }
        self.persist(&bank)?;
        let snapshot = Arc::new(bank);
        let cell = Cell { writer: Mutex::new(()), snapshot: RwLock::new(snapshot.clone()) };
        banks.insert(snapshot.id.clone(), Arc::new(cell));
        Ok(snapshot)
    }

    pub fn snapshot(&self, id: &str) -> Result<Arc<ItemBank>, BankError> {
        Ok(self.cell(id)?.snapshot.read().unwrap().clone())
    }

    pub fn ids(&self) -> Vec<String> {
        self.banks.read().unwrap().keys().cloned().collect()
    }

    pub fn transact<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut ItemBank) -> Result<T, BankError>,
    ) -> Result<(T, Arc<ItemBank>), BankError> {
        let cell = self.cell(id)?;
        let _writer = cell.writer.lock().unwrap();
        let mut working = (**cell.snapshot.read().unwrap()).clone();
        let out = f(&mut working)?;
        working.validate()?;
        self.persist(&working)?;
        let snapshot = Arc::new(working);
        *cell.snapshot.write().unwrap() = snapshot.clone();
        Ok((out, snapshot))
    }

    fn persist(&self, bank: &ItemBank) -> Result<(), BankError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(format!("{}.json", sanitize(&bank.id)));
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, bank.export_json())
            .and_then(|_| std::fs::rename(&tmp, &path))
            .map_err(|e| BankError::Io(e.to_string()))
    }
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}
