use std::collections::HashMap;
use std::ffi::c_void;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use libloading::Library;

use super::{FunctionShape, PluginError, PluginManifest, ScalarType, ShapeError};

/// Flat numeric array passed to or returned from a plugin function.
#[derive(Debug, Clone, PartialEq)]
pub enum NumericArray {
    Int32(Vec<i32>),
    Float32(Vec<f32>),
    Float64(Vec<f64>),
}

impl NumericArray {
    pub fn scalar_type(&self) -> ScalarType {
        match self {
            NumericArray::Int32(_) => ScalarType::Int32,
            NumericArray::Float32(_) => ScalarType::Float32,
            NumericArray::Float64(_) => ScalarType::Float64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NumericArray::Int32(v) => v.len(),
            NumericArray::Float32(v) => v.len(),
            NumericArray::Float64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parses comma-separated values as the given element type.
    pub fn parse(ty: ScalarType, text: &str) -> Result<Self, String> {
        fn items<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, String> {
            text.split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| format!("cannot parse `{}`", t.trim()))
                })
                .collect()
        }
        Ok(match ty {
            ScalarType::Int32 => NumericArray::Int32(items(text)?),
            ScalarType::Float32 => NumericArray::Float32(items(text)?),
            ScalarType::Float64 => NumericArray::Float64(items(text)?),
        })
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match self {
            NumericArray::Float64(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for NumericArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, v: &[T]) -> fmt::Result {
            let parts: Vec<String> = v.iter().map(T::to_string).collect();
            write!(f, "[{}]", parts.join(", "))
        }
        match self {
            NumericArray::Int32(v) => list(f, v),
            NumericArray::Float32(v) => list(f, v),
            NumericArray::Float64(v) => list(f, v),
        }
    }
}

const GUARD: usize = 4;
const CANARY_I32: i32 = 0x5AFE_C0DE;
const CANARY_F32: u32 = 0x7FC0_DEAD;
const CANARY_F64: u64 = 0x7FF8_DEAD_BEEF_C0DE;

/// Output buffer with canary elements on both sides of the declared region.
enum Guarded {
    Int32(Vec<i32>),
    Float32(Vec<f32>),
    Float64(Vec<f64>),
}

impl Guarded {
    fn new(ty: ScalarType, len: usize) -> Self {
        let total = len + 2 * GUARD;
        let mut buf = match ty {
            ScalarType::Int32 => Guarded::Int32(vec![0; total]),
            ScalarType::Float32 => Guarded::Float32(vec![0.0; total]),
            ScalarType::Float64 => Guarded::Float64(vec![0.0; total]),
        };
        buf.arm(len);
        buf
    }

    fn arm(&mut self, len: usize) {
        let guard_idx = (0..GUARD).chain(GUARD + len..2 * GUARD + len);
        match self {
            Guarded::Int32(v) => guard_idx.for_each(|i| v[i] = CANARY_I32),
            Guarded::Float32(v) => guard_idx.for_each(|i| v[i] = f32::from_bits(CANARY_F32)),
            Guarded::Float64(v) => guard_idx.for_each(|i| v[i] = f64::from_bits(CANARY_F64)),
        }
    }

    fn data_ptr(&mut self) -> *mut c_void {
        match self {
            Guarded::Int32(v) => v[GUARD..].as_mut_ptr().cast(),
            Guarded::Float32(v) => v[GUARD..].as_mut_ptr().cast(),
            Guarded::Float64(v) => v[GUARD..].as_mut_ptr().cast(),
        }
    }

    fn intact(&self, len: usize) -> bool {
        let mut guard_idx = (0..GUARD).chain(GUARD + len..2 * GUARD + len);
        match self {
            Guarded::Int32(v) => guard_idx.all(|i| v[i] == CANARY_I32),
            Guarded::Float32(v) => guard_idx.all(|i| v[i].to_bits() == CANARY_F32),
            Guarded::Float64(v) => guard_idx.all(|i| v[i].to_bits() == CANARY_F64),
        }
    }

    fn into_array(self, len: usize) -> NumericArray {
        match self {
            Guarded::Int32(v) => NumericArray::Int32(v[GUARD..GUARD + len].to_vec()),
            Guarded::Float32(v) => NumericArray::Float32(v[GUARD..GUARD + len].to_vec()),
            Guarded::Float64(v) => NumericArray::Float64(v[GUARD..GUARD + len].to_vec()),
        }
    }
}

/// Address of a resolved foreign function.
#[derive(Clone, Copy)]
struct RawSymbol(*const c_void);

// SAFETY: a code address carries no thread affinity; concurrent use is
// governed by the per-function call lock below.
unsafe impl Send for RawSymbol {}
unsafe impl Sync for RawSymbol {}

/// Calls `sym` as `void f(void *, void *, ...)` with `args.len()` pointers.
///
/// # Safety
/// `sym` must be a C-ABI function taking exactly `args.len()` pointer
/// parameters, and every pointer must reference a buffer the function may
/// access according to its declared shape.
unsafe fn invoke(sym: RawSymbol, args: &[*mut c_void]) {
    macro_rules! call {
        (@ptr $i:tt) => { *mut c_void };
        ($($i:tt)+) => {{
            type F = unsafe extern "C" fn($(call!(@ptr $i)),+);
            let f: F = std::mem::transmute::<*const c_void, F>(sym.0);
            f($(args[$i]),+)
        }};
    }
    match args.len() {
        1 => call!(0),
        2 => call!(0 1),
        3 => call!(0 1 2),
        4 => call!(0 1 2 3),
        5 => call!(0 1 2 3 4),
        6 => call!(0 1 2 3 4 5),
        7 => call!(0 1 2 3 4 5 6),
        8 => call!(0 1 2 3 4 5 6 7),
        9 => call!(0 1 2 3 4 5 6 7 8),
        10 => call!(0 1 2 3 4 5 6 7 8 9),
        11 => call!(0 1 2 3 4 5 6 7 8 9 10),
        12 => call!(0 1 2 3 4 5 6 7 8 9 10 11),
        13 => call!(0 1 2 3 4 5 6 7 8 9 10 11 12),
        14 => call!(0 1 2 3 4 5 6 7 8 9 10 11 12 13),
        15 => call!(0 1 2 3 4 5 6 7 8 9 10 11 12 13 14),
        16 => call!(0 1 2 3 4 5 6 7 8 9 10 11 12 13 14 15),
        n => unreachable!("manifest parser caps arity, got {n}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Lengths {
    inputs: Vec<usize>,
    outputs: Vec<usize>,
}

struct BoundFunction {
    declared: FunctionShape,
    current: RwLock<Lengths>,
    symbol: RawSymbol,
    call_lock: Mutex<()>,
}

/// A shared library opened against a manifest, with every declared function
/// resolved.
pub struct LoadedPlugin {
    path: PathBuf,
    functions: Vec<BoundFunction>,
    index: HashMap<String, usize>,
    // dropped last: the symbols above point into it
    _library: Library,
}

impl fmt::Debug for LoadedPlugin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LoadedPlugin")
            .field("path", &self.path)
            .field(
                "functions",
                &self.functions.iter().map(|b| &b.declared.name).collect::<Vec<_>>(),
            )
            .finish()
    }
}

/// Opens `path` and resolves every function named in `manifest`.
pub fn load_plugin(path: &Path, manifest: &PluginManifest) -> Result<LoadedPlugin, PluginError> {
    // SAFETY: loading runs the library's initialisers; plugins are trusted
    // native code supplied by the user.
    let library = unsafe { Library::new(path) }.map_err(|e| PluginError::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;

    let mut functions = Vec::with_capacity(manifest.functions.len());
    let mut index = HashMap::new();
    for shape in &manifest.functions {
        // SAFETY: the symbol is only ever called through `invoke`, with the
        // arity recorded in the manifest.
        let symbol = unsafe { library.get::<*const c_void>(shape.name.as_bytes()) }
            .map(|s| RawSymbol(*s))
            .map_err(|_| PluginError::MissingSymbol {
                path: path.to_path_buf(),
                symbol: shape.name.clone(),
            })?;
        if symbol.0.is_null() {
            return Err(PluginError::MissingSymbol {
                path: path.to_path_buf(),
                symbol: shape.name.clone(),
            });
        }
        index.insert(shape.name.clone(), functions.len());
        functions.push(BoundFunction {
            current: RwLock::new(Lengths {
                inputs: shape.in_lengths.clone(),
                outputs: shape.out_lengths.clone(),
            }),
            declared: shape.clone(),
            symbol,
            call_lock: Mutex::new(()),
        });
    }
    Ok(LoadedPlugin {
        path: path.to_path_buf(),
        functions,
        index,
        _library: library,
    })
}

/// Reads the manifest at `manifest_path` and loads the library it accompanies.
///
/// `library` takes precedence; otherwise the manifest's `library` key is
/// resolved relative to the manifest's directory.
pub fn load_with_manifest_file(
    library: Option<&Path>,
    manifest_path: &Path,
) -> Result<LoadedPlugin, PluginError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| PluginError::Io {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let manifest = PluginManifest::parse(&text)?;
    let path = match (library, &manifest.library) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) if p.is_relative() => manifest_path
            .parent()
            .map(|dir| dir.join(p))
            .unwrap_or_else(|| p.clone()),
        (None, Some(p)) => p.clone(),
        (None, None) => {
            return Err(PluginError::Load {
                path: manifest_path.to_path_buf(),
                message: "no library path given and manifest has no `library` key".into(),
            })
        }
    };
    load_plugin(&path, &manifest)
}

impl LoadedPlugin {
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn function_names(&self) -> impl Iterator<Item = &str> {
        self.functions.iter().map(|b| b.declared.name.as_str())
    }

    fn bound(&self, name: &str) -> Result<&BoundFunction, PluginError> {
        self.index
            .get(name)
            .map(|&i| &self.functions[i])
            .ok_or_else(|| PluginError::UnknownFunction(name.to_string()))
    }

    /// Shape with any runtime overrides applied.
    pub fn shape(&self, name: &str) -> Result<FunctionShape, PluginError> {
        let b = self.bound(name)?;
        let cur = b.current.read().unwrap_or_else(|e| e.into_inner());
        Ok(FunctionShape {
            in_lengths: cur.inputs.clone(),
            out_lengths: cur.outputs.clone(),
            ..b.declared.clone()
        })
    }

    /// Replaces the array lengths of an overridable function. Arities and
    /// element types stay fixed.
    pub fn override_lengths(
        &self,
        name: &str,
        in_lengths: &[usize],
        out_lengths: &[usize],
    ) -> Result<FunctionShape, PluginError> {
        let b = self.bound(name)?;
        check_override(&b.declared, in_lengths, out_lengths)?;
        {
            let mut cur = b.current.write().unwrap_or_else(|e| e.into_inner());
            cur.inputs = in_lengths.to_vec();
            cur.outputs = out_lengths.to_vec();
        }
        self.shape(name)
    }

    /// Calls `name` on `inputs`, validated against the current shape.
    pub fn call(&self, name: &str, inputs: &[NumericArray]) -> Result<Vec<NumericArray>, PluginError> {
        let b = self.bound(name)?;
        let lengths = b.current.read().unwrap_or_else(|e| e.into_inner()).clone();
        self.call_bound(b, inputs, &lengths)
    }

    /// Calls an overridable function with one-off lengths, leaving the stored
    /// overrides untouched.
    pub fn call_with_lengths(
        &self,
        name: &str,
        inputs: &[NumericArray],
        in_lengths: &[usize],
        out_lengths: &[usize],
    ) -> Result<Vec<NumericArray>, PluginError> {
        let b = self.bound(name)?;
        check_override(&b.declared, in_lengths, out_lengths)?;
        let lengths = Lengths {
            inputs: in_lengths.to_vec(),
            outputs: out_lengths.to_vec(),
        };
        self.call_bound(b, inputs, &lengths)
    }

    fn call_bound(
        &self,
        b: &BoundFunction,
        inputs: &[NumericArray],
        lengths: &Lengths,
    ) -> Result<Vec<NumericArray>, PluginError> {
        let shape = &b.declared;
        validate_inputs(shape, inputs, &lengths.inputs)?;

        let mut outputs: Vec<Guarded> = shape
            .out_types
            .iter()
            .zip(&lengths.outputs)
            .map(|(&ty, &len)| Guarded::new(ty, len))
            .collect();
        // foreign code may scribble on its inputs; hand it copies
        let mut scratch: Vec<NumericArray> = inputs.to_vec();

        let mut args: Vec<*mut c_void> = Vec::with_capacity(shape.arity());
        args.extend(outputs.iter_mut().map(Guarded::data_ptr));
        args.extend(scratch.iter_mut().map(|a| match a {
            NumericArray::Int32(v) => v.as_mut_ptr().cast::<c_void>(),
            NumericArray::Float32(v) => v.as_mut_ptr().cast(),
            NumericArray::Float64(v) => v.as_mut_ptr().cast(),
        }));

        {
            let _serial = if shape.reentrant {
                None
            } else {
                Some(b.call_lock.lock().unwrap_or_else(|e| e.into_inner()))
            };
            // SAFETY: arity matches the manifest, each pointer addresses a
            // live buffer of the declared type and validated length.
            unsafe { invoke(b.symbol, &args) };
        }

        for (i, (buf, &len)) in outputs.iter().zip(&lengths.outputs).enumerate() {
            if !buf.intact(len) {
                return Err(PluginError::Overrun {
                    function: shape.name.clone(),
                    output: i,
                });
            }
        }
        Ok(outputs
            .into_iter()
            .zip(&lengths.outputs)
            .map(|(buf, &len)| buf.into_array(len))
            .collect())
    }
}

fn check_override(
    shape: &FunctionShape,
    in_lengths: &[usize],
    out_lengths: &[usize],
) -> Result<(), PluginError> {
    if !shape.overridable {
        return Err(PluginError::NotOverridable(shape.name.clone()));
    }
    if in_lengths.len() != shape.in_types.len() || out_lengths.len() != shape.out_types.len() {
        return Err(PluginError::OverrideArity {
            function: shape.name.clone(),
            inputs: (shape.in_types.len(), in_lengths.len()),
            outputs: (shape.out_types.len(), out_lengths.len()),
        });
    }
    if in_lengths.iter().chain(out_lengths).any(|&n| n == 0) {
        return Err(PluginError::OverrideLength(shape.name.clone()));
    }
    Ok(())
}

fn validate_inputs(
    shape: &FunctionShape,
    inputs: &[NumericArray],
    lengths: &[usize],
) -> Result<(), ShapeError> {
    if inputs.len() != shape.in_types.len() {
        return Err(ShapeError::Arity {
            function: shape.name.clone(),
            expected: shape.in_types.len(),
            got: inputs.len(),
        });
    }
    for (index, ((arr, &ty), &len)) in inputs.iter().zip(&shape.in_types).zip(lengths).enumerate() {
        if arr.scalar_type() != ty {
            return Err(ShapeError::Type {
                function: shape.name.clone(),
                index,
                expected: ty,
                got: arr.scalar_type(),
            });
        }
        if arr.len() != len {
            return Err(ShapeError::Length {
                function: shape.name.clone(),
                index,
                expected: len,
                got: arr.len(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> FunctionShape {
        FunctionShape {
            name: "fun2".into(),
            out_lengths: vec![1, 2],
            out_types: vec![ScalarType::Int32, ScalarType::Float32],
            in_lengths: vec![1, 2],
            in_types: vec![ScalarType::Int32, ScalarType::Float32],
            overridable: false,
            reentrant: false,
        }
    }

    #[test]
    fn validation_classes() {
        let s = shape();
        let ok = [NumericArray::Int32(vec![3]), NumericArray::Float32(vec![2.0, 5.0])];
        assert!(validate_inputs(&s, &ok, &s.in_lengths).is_ok());
        assert!(matches!(
            validate_inputs(&s, &ok[..1], &s.in_lengths),
            Err(ShapeError::Arity { expected: 2, got: 1, .. })
        ));
        let wrong_type = [NumericArray::Int32(vec![3]), NumericArray::Float64(vec![2.0, 5.0])];
        assert!(matches!(
            validate_inputs(&s, &wrong_type, &s.in_lengths),
            Err(ShapeError::Type { index: 1, .. })
        ));
        let wrong_len = [NumericArray::Int32(vec![3, 4]), NumericArray::Float32(vec![2.0, 5.0])];
        assert!(matches!(
            validate_inputs(&s, &wrong_len, &s.in_lengths),
            Err(ShapeError::Length { index: 0, expected: 1, got: 2, .. })
        ));
    }

    #[test]
    fn override_rules() {
        let mut s = shape();
        assert!(matches!(
            check_override(&s, &[1, 2], &[1, 2]),
            Err(PluginError::NotOverridable(_))
        ));
        s.overridable = true;
        assert!(check_override(&s, &[10, 1], &[1, 2]).is_ok());
        assert!(matches!(
            check_override(&s, &[10], &[1, 2]),
            Err(PluginError::OverrideArity { .. })
        ));
        assert!(matches!(
            check_override(&s, &[0, 1], &[1, 2]),
            Err(PluginError::OverrideLength(_))
        ));
    }

    #[test]
    fn canaries_detect_overrun() {
        for ty in ScalarType::ALL {
            let mut g = Guarded::new(ty, 3);
            assert!(g.intact(3));
            let p = g.data_ptr();
            // write one element past the end
            unsafe {
                match ty {
                    ScalarType::Int32 => *p.cast::<i32>().add(3) = 7,
                    ScalarType::Float32 => *p.cast::<f32>().add(3) = 7.0,
                    ScalarType::Float64 => *p.cast::<f64>().add(3) = 7.0,
                }
            }
            assert!(!g.intact(3));
        }
    }

    #[test]
    fn parse_arrays() {
        assert_eq!(
            NumericArray::parse(ScalarType::Float64, "2.0, 5").unwrap(),
            NumericArray::Float64(vec![2.0, 5.0])
        );
        assert!(NumericArray::parse(ScalarType::Int32, "1.5").is_err());
    }
}
