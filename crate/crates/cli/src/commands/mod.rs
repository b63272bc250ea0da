pub mod candidates;
pub mod eval;
pub mod generate;
pub mod plot_cmd;
pub mod sweep;
pub mod train;

/// Applies Some(flag) overrides from clap onto config-file-backed parameters.
macro_rules! merge_flags {
    ($params:expr, $args:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(value) = $args.$field.clone() {
            $params.$field = value;
        })+
    };
}
pub(crate) use merge_flags;
