use std::io::IsTerminal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorChoice {
    Auto,
    Never,
    Always,
}

impl ColorChoice {
    /// Reads `ROUNDA_COLOR`; unset means `auto`.
    pub fn from_env() -> Result<Self, String> {
        match std::env::var("ROUNDA_COLOR") {
            Err(_) => Ok(ColorChoice::Auto),
            Ok(v) => match v.as_str() {
                "auto" | "" => Ok(ColorChoice::Auto),
                "never" => Ok(ColorChoice::Never),
                "always" => Ok(ColorChoice::Always),
                other => Err(format!("ROUNDA_COLOR must be auto, never or always, not `{other}`")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Style {
    enabled: bool,
}

impl Style {
    pub fn new(choice: ColorChoice) -> Self {
        let enabled = match choice {
            ColorChoice::Always => true,
            ColorChoice::Never => false,
            ColorChoice::Auto => std::io::stdout().is_terminal(),
        };
        Style { enabled }
    }

    fn paint(self, code: &str, text: &str) -> String {
        if self.enabled {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }

    pub fn pass(self, text: &str) -> String {
        self.paint("1;32", text)
    }

    pub fn fail(self, text: &str) -> String {
        self.paint("1;31", text)
    }

    pub fn dim(self, text: &str) -> String {
        self.paint("2", text)
    }
}
