use std::path::{Path, PathBuf};

/// Resolves command-line inputs to files. Directories are searched
/// recursively for `extension`; arguments with glob characters are
/// expanded. Results keep argument order, sorted within each argument.
/// Arguments that match nothing come back as errors.
pub fn expand_inputs(args: &[String], extension: &str) -> Vec<Result<PathBuf, (String, String)>> {
    let mut out = Vec::new();
    for arg in args {
        let path = Path::new(arg);
        let pattern = if path.is_dir() {
            Some(format!("{}/**/*.{extension}", glob::Pattern::escape(arg.trim_end_matches('/'))))
        } else if !path.exists() && arg.contains(['*', '?', '[']) {
            Some(arg.clone())
        } else {
            None
        };
        let Some(pattern) = pattern else {
            out.push(if path.is_file() { Ok(path.to_path_buf()) } else { Err((arg.clone(), "no such file".into())) });
            continue;
        };
        match glob::glob(&pattern) {
            Ok(paths) => {
                let mut found: Vec<PathBuf> = paths.filter_map(Result::ok).filter(|p| p.is_file()).collect();
                found.sort();
                if found.is_empty() {
                    out.push(Err((arg.clone(), format!("no *.{extension} files matched"))));
                }
                out.extend(found.into_iter().map(Ok));
            }
            Err(e) => out.push(Err((arg.clone(), format!("bad pattern: {e}")))),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn files_directories_and_globs() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir(root.join("sub")).unwrap();
        for f in ["b.gp5", "a.gp5", "sub/c.gp5", "notes.txt"] {
            std::fs::write(root.join(f), b"").unwrap();
        }
        let d = root.display().to_string();
        let got = expand_inputs(&[d.clone(), format!("{d}/*.txt"), format!("{d}/missing.gp5")], "gp5");
        let names: Vec<String> = got
            .iter()
            .map(|r| match r {
                Ok(p) => p.strip_prefix(root).unwrap().display().to_string(),
                Err((_, why)) => why.clone(),
            })
            .collect();
        assert_eq!(names, ["a.gp5", "b.gp5", "sub/c.gp5", "notes.txt", "no such file"]);
    }
}
