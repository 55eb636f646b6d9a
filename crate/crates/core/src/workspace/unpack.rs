//! Confined extraction of gzip tar archives.
//!
//! Every entry loses its single top-level directory. Entries with `..`
//! components or absolute paths, links resolving outside the target, writes
//! through symlinked directories and special files are rejected before
//! anything is written for them.

use std::ffi::OsStr;
use std::fs;
use std::io::{self, Read};
use std::os::unix::ffi::OsStrExt;
use std::os::unix::fs::PermissionsExt;
use std::path::{Component, Path, PathBuf};

use tar::EntryType;

use super::WorkspaceError;

#[derive(Debug, Default)]
pub struct UnpackReport {
    pub files: usize,
    /// Commit id from a pax global header `comment`, as forges embed it.
    pub commit: Option<String>,
}

fn unsafe_entry(path: &[u8], why: &str) -> WorkspaceError {
    WorkspaceError::UnsafeEntry {
        path: String::from_utf8_lossy(path).into_owned(),
        reason: why.to_owned(),
    }
}

fn corrupt(e: impl std::fmt::Display) -> WorkspaceError {
    WorkspaceError::Corrupt(e.to_string())
}

/// Normal components of an archive path, or an error for anything that
/// could climb out of the extraction root.
fn clean_components(raw: &[u8]) -> Result<Vec<PathBuf>, WorkspaceError> {
    let path = Path::new(OsStr::from_bytes(raw));
    let mut out = Vec::new();
    for c in path.components() {
        match c {
            Component::Normal(p) => out.push(PathBuf::from(p)),
            Component::CurDir => {}
            Component::ParentDir => return Err(unsafe_entry(raw, "parent directory component")),
            Component::RootDir | Component::Prefix(_) => {
                return Err(unsafe_entry(raw, "absolute path"))
            }
        }
    }
    Ok(out)
}

/// Resolves a symlink target lexically from the link's parent directory
/// (both relative to the extraction root). `None` means it escapes.
fn resolve_link(parent: &[PathBuf], target: &[u8]) -> Option<Vec<PathBuf>> {
    let target = Path::new(OsStr::from_bytes(target));
    let mut stack: Vec<PathBuf> = parent.to_vec();
    for c in target.components() {
        match c {
            Component::Normal(p) => stack.push(PathBuf::from(p)),
            Component::CurDir => {}
            Component::ParentDir => {
                stack.pop()?;
            }
            Component::RootDir | Component::Prefix(_) => return None,
        }
    }
    Some(stack)
}

/// Refuses to go through any existing symlink between `root` and `rel`'s parent.
fn check_ancestors(root: &Path, rel: &[PathBuf], raw: &[u8]) -> Result<(), WorkspaceError> {
    let mut cur = root.to_path_buf();
    for part in &rel[..rel.len().saturating_sub(1)] {
        cur.push(part);
        match fs::symlink_metadata(&cur) {
            Ok(m) if m.file_type().is_symlink() => {
                return Err(unsafe_entry(raw, "path goes through a symlink"))
            }
            Ok(m) if !m.is_dir() => return Err(unsafe_entry(raw, "parent is not a directory")),
            Ok(_) => {}
            Err(_) => break,
        }
    }
    Ok(())
}

/// Removes a previous regular file at `dest`; anything else already there is refused.
fn clear_dest(dest: &Path, raw: &[u8]) -> Result<(), WorkspaceError> {
    match fs::symlink_metadata(dest) {
        Ok(m) if m.file_type().is_symlink() => Err(unsafe_entry(raw, "overwrites a symlink")),
        Ok(m) if m.is_dir() => Err(unsafe_entry(raw, "overwrites a directory")),
        Ok(_) => fs::remove_file(dest).map_err(WorkspaceError::Io),
        Err(_) => Ok(()),
    }
}

pub fn unpack_tar_gz(
    reader: impl Read,
    root: &Path,
    max_unpacked: u64,
) -> Result<UnpackReport, WorkspaceError> {
    fs::create_dir_all(root)?;
    let mut archive = tar::Archive::new(flate2::read::GzDecoder::new(reader));
    let mut report = UnpackReport::default();
    let mut top: Option<PathBuf> = None;
    let mut written: u64 = 0;

    for entry in archive.entries().map_err(corrupt)? {
        let mut entry = entry.map_err(corrupt)?;
        let etype = entry.header().entry_type();
        match etype {
            EntryType::XGlobalHeader => {
                if let Some(exts) = entry.pax_extensions().map_err(corrupt)? {
                    for ext in exts.flatten() {
                        if ext.key() == Ok("comment") {
                            if let Ok(v) = ext.value() {
                                report.commit = Some(v.trim().to_owned());
                            }
                        }
                    }
                }
                continue;
            }
            EntryType::XHeader | EntryType::GNULongName | EntryType::GNULongLink => continue,
            _ => {}
        }

        let raw = entry.path_bytes().into_owned();
        let mut parts = clean_components(&raw)?;
        if parts.is_empty() {
            continue;
        }
        let first = parts.remove(0);
        match &top {
            None => top = Some(first),
            Some(t) if *t == first => {}
            Some(_) => return Err(corrupt("archive has more than one top-level directory")),
        }
        if parts.is_empty() {
            if etype.is_dir() {
                continue;
            }
            return Err(corrupt("archive has a file at its top level"));
        }

        check_ancestors(root, &parts, &raw)?;
        let dest: PathBuf = parts.iter().fold(root.to_path_buf(), |p, c| p.join(c));
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }

        match etype {
            EntryType::Directory => {
                if fs::symlink_metadata(&dest).is_ok_and(|m| m.file_type().is_symlink()) {
                    return Err(unsafe_entry(&raw, "overwrites a symlink"));
                }
                fs::create_dir_all(&dest)?;
            }
            EntryType::Regular | EntryType::Continuous => {
                clear_dest(&dest, &raw)?;
                written = written.saturating_add(entry.size());
                if written > max_unpacked {
                    return Err(WorkspaceError::TooLarge {
                        limit: max_unpacked,
                    });
                }
                let mut out = fs::OpenOptions::new()
                    .write(true)
                    .create_new(true)
                    .open(&dest)?;
                io::copy(&mut (&mut entry).take(max_unpacked), &mut out).map_err(corrupt)?;
                let mode = entry.header().mode().unwrap_or(0o644) & 0o755;
                fs::set_permissions(&dest, fs::Permissions::from_mode(mode | 0o600))?;
                report.files += 1;
            }
            EntryType::Symlink => {
                let target = entry
                    .link_name_bytes()
                    .ok_or_else(|| corrupt("symlink without target"))?
                    .into_owned();
                let parent = &parts[..parts.len() - 1];
                if Path::new(OsStr::from_bytes(&target)).is_absolute()
                    || resolve_link(parent, &target).is_none()
                {
                    return Err(unsafe_entry(&raw, "link points outside the workspace"));
                }
                clear_dest(&dest, &raw)?;
                std::os::unix::fs::symlink(OsStr::from_bytes(&target), &dest)?;
                report.files += 1;
            }
            EntryType::Link => {
                let target = entry
                    .link_name_bytes()
                    .ok_or_else(|| corrupt("hard link without target"))?
                    .into_owned();
                let mut tparts = clean_components(&target)
                    .map_err(|_| unsafe_entry(&raw, "link points outside the workspace"))?;
                if tparts.len() < 2 || Some(&tparts[0]) != top.as_ref() {
                    return Err(unsafe_entry(&raw, "link points outside the workspace"));
                }
                tparts.remove(0);
                check_ancestors(root, &tparts, &raw)?;
                let src: PathBuf = tparts.iter().fold(root.to_path_buf(), |p, c| p.join(c));
                match fs::symlink_metadata(&src) {
                    Ok(m) if m.is_file() => {}
                    _ => return Err(unsafe_entry(&raw, "hard link target is not an extracted file")),
                }
                clear_dest(&dest, &raw)?;
                fs::hard_link(&src, &dest)?;
                report.files += 1;
            }
            other => {
                return Err(unsafe_entry(
                    &raw,
                    &format!("unsupported entry type {other:?}"),
                ))
            }
        }
    }
    Ok(report)
}
