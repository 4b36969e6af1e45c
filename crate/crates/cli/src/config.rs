use std::path::Path;

use conceptviz::codegen::{BackendConfig, BackendKind};
use conceptviz_server::ServerConfig;

use crate::fail::Failure;

/// Reads a TOML config; a missing path yields the defaults.
pub fn load(path: Option<&Path>) -> Result<ServerConfig, Failure> {
    let Some(path) = path else { return Ok(ServerConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::error(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::error(format!("{}: {e}", path.display())))
}

pub fn backend(path: Option<&Path>, kind: Option<&str>) -> Result<BackendConfig, Failure> {
    let mut cfg = load(path)?.backend;
    set_kind(&mut cfg, kind);
    Ok(cfg)
}

pub fn set_kind(cfg: &mut BackendConfig, kind: Option<&str>) {
    match kind {
        Some("offline") => cfg.kind = BackendKind::Offline,
        Some("remote") => cfg.kind = BackendKind::Remote,
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let dir = std::env::temp_dir().join(format!("conceptviz-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("c.toml");
        std::fs::write(&p, "data_dir = \"d\"\n[backend]\nkind = \"remote\"\nmodel = \"m\"\n").unwrap();
        let cfg = load(Some(&p)).unwrap();
        assert_eq!(cfg.data_dir, Path::new("d"));
        assert_eq!(cfg.backend.kind, BackendKind::Remote);
        assert_eq!(cfg.backend.model, "m");
        assert_eq!(cfg.backend.api_key_env, BackendConfig::default().api_key_env);
        assert_eq!(backend(Some(&p), Some("offline")).unwrap().kind, BackendKind::Offline);
        std::fs::remove_dir_all(dir).unwrap();
    }
}
