//! Line-delimited JSON bridge to an action scorer living in a child process.
//!
//! Request:  `{"id": 7, "s_kind": "heading", "s": "...", "q": "..."}`
//! Response: `{"id": 7, "logits": [l_sub_heading, l_sub_text, l_concat, l_reduce]}`
//!
//! One request is in flight at a time per handle.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ActionScorer, ActionScores, ScorerError, ScoringInput};
use crate::catalog::NodeKind;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    /// Shell command line that starts the scorer process.
    pub command: String,
    pub timeout: Duration,
}

impl BridgeConfig {
    pub fn new(command: impl Into<String>) -> BridgeConfig {
        BridgeConfig { command: command.into(), timeout: DEFAULT_TIMEOUT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub id: u64,
    pub s_kind: NodeKind,
    pub s: String,
    pub q: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResponse {
    pub id: u64,
    pub logits: Vec<f64>,
}

pub struct BridgeScorer {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    next_id: u64,
}

impl BridgeScorer {
    pub fn spawn(config: &BridgeConfig) -> Result<BridgeScorer, ScorerError> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(&config.command);
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScorerError::BridgeIo(format!("cannot start `{}`: {e}", config.command)))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout was piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(BridgeScorer { child, stdin, lines: rx, timeout: config.timeout, next_id: 0 })
    }

    fn request(&mut self, input: &ScoringInput<'_>) -> Result<ActionScores, ScorerError> {
        let id = self.next_id;
        self.next_id += 1;
        let req = BridgeRequest {
            id,
            s_kind: input.s_kind,
            s: input.s_content.to_owned(),
            q: input.q_content.to_owned(),
        };
        let mut line = serde_json::to_string(&req).expect("request serializes");
        line.push('\n');
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| ScorerError::BridgeIo("bridge input already closed".into()))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| ScorerError::BridgeIo(format!("write failed: {e}")))?;
        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(l)) => l,
            Ok(Err(e)) => return Err(ScorerError::BridgeIo(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(ScorerError::BridgeIo(format!("no response within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(ScorerError::BridgeIo("scorer process closed its output".into()))
            }
        };
        parse_response(&reply, id)
    }
}

pub fn parse_response(line: &str, expected_id: u64) -> Result<ActionScores, ScorerError> {
    let resp: BridgeResponse = serde_json::from_str(line)
        .map_err(|e| ScorerError::BridgeProtocol(format!("malformed response {line:?}: {e}")))?;
    if resp.id != expected_id {
        return Err(ScorerError::BridgeProtocol(format!("response id {} != request id {expected_id}", resp.id)));
    }
    if resp.logits.len() != 4 {
        return Err(ScorerError::BridgeProtocol(format!("expected 4 logits, got {}", resp.logits.len())));
    }
    if resp.logits.iter().any(|l| !l.is_finite()) {
        return Err(ScorerError::BridgeProtocol("non-finite logit".into()));
    }
    Ok(ActionScores::from_logits([resp.logits[0], resp.logits[1], resp.logits[2], resp.logits[3]]))
}

impl ActionScorer for BridgeScorer {
    fn score(&mut self, input: &ScoringInput<'_>) -> Result<ActionScores, ScorerError> {
        self.request(input)
    }
}

impl Drop for BridgeScorer {
    fn drop(&mut self) {
        drop(self.stdin.take());
        // the shell may have forked the scorer; take down the whole group
        #[cfg(unix)]
        if let Ok(pid) = i32::try_from(self.child.id()) {
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Serves the bridge protocol on the given streams using a local scorer.
/// Runs until the input closes.
pub fn serve<R: BufRead, W: Write, S: ActionScorer>(input: R, mut output: W, scorer: &mut S) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: BridgeRequest = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let scores = scorer
            .score(&ScoringInput { s_kind: req.s_kind, s_content: &req.s, q_content: &req.q })
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let resp = BridgeResponse { id: req.id, logits: scores.logits.to_vec() };
        writeln!(output, "{}", serde_json::to_string(&resp).expect("response serializes"))?;
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Action;

    const ECHO: &str = r#"while read -r line; do id=$(printf '%s' "$line" | sed 's/^{"id":\([0-9]*\).*/\1/'); printf '{"id":%s,"logits":[1,0,0,0]}\n' "$id"; done"#;

    fn input() -> ScoringInput<'static> {
        ScoringInput { s_kind: NodeKind::Root, s_content: "", q_content: "第一章 总则" }
    }

    #[test]
    fn echo_double_scores_sub_heading() {
        let mut b = BridgeScorer::spawn(&BridgeConfig::new(ECHO)).unwrap();
        for _ in 0..3 {
            let s = b.score(&input()).unwrap();
            assert_eq!(s.argmax(), Action::SubHeading);
        }
    }

    #[test]
    fn three_logits_is_a_protocol_error() {
        let cmd = r#"while read -r line; do echo '{"id":0,"logits":[1,0,0]}'; done"#;
        let mut b = BridgeScorer::spawn(&BridgeConfig::new(cmd)).unwrap();
        assert!(matches!(b.score(&input()), Err(ScorerError::BridgeProtocol(_))));
    }

    #[test]
    fn garbage_and_wrong_id_are_protocol_errors() {
        assert!(matches!(parse_response("not json", 0), Err(ScorerError::BridgeProtocol(_))));
        assert!(matches!(parse_response(r#"{"id":3,"logits":[0,0,0,0]}"#, 2), Err(ScorerError::BridgeProtocol(_))));
        assert!(matches!(parse_response(r#"{"id":2,"logits":[0,0,0,1e999]}"#, 2), Err(ScorerError::BridgeProtocol(_))));
        assert!(parse_response(r#"{"id":2,"logits":[0,0,0,1]}"#, 2).is_ok());
    }

    #[test]
    fn dead_process_is_an_io_error() {
        let mut b = BridgeScorer::spawn(&BridgeConfig::new("exit 0")).unwrap();
        thread::sleep(Duration::from_millis(50));
        assert!(matches!(b.score(&input()), Err(ScorerError::BridgeIo(_))));
    }

    #[test]
    fn silent_process_times_out() {
        assert_eq!(DEFAULT_TIMEOUT, Duration::from_secs(10));
        let cfg = BridgeConfig { command: "sleep 30".into(), timeout: Duration::from_millis(200) };
        let mut b = BridgeScorer::spawn(&cfg).unwrap();
        let err = b.score(&input()).unwrap_err();
        assert!(matches!(err, ScorerError::BridgeIo(ref m) if m.contains("no response")), "{err}");
    }

    #[test]
    fn serve_answers_each_request() {
        struct Fixed;
        impl ActionScorer for Fixed {
            fn score(&mut self, _: &ScoringInput<'_>) -> Result<ActionScores, ScorerError> {
                Ok(ActionScores::from_logits([0.0, 0.0, 0.0, 2.5]))
            }
        }
        let reqs = "{\"id\":4,\"s_kind\":\"text\",\"s\":\"a\",\"q\":\"b\"}\n\n{\"id\":5,\"s_kind\":\"root\",\"s\":\"\",\"q\":\"c\"}\n";
        let mut out = Vec::new();
        serve(reqs.as_bytes(), &mut out, &mut Fixed).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines, vec![r#"{"id":4,"logits":[0.0,0.0,0.0,2.5]}"#, r#"{"id":5,"logits":[0.0,0.0,0.0,2.5]}"#]);
        assert_eq!(parse_response(lines[1], 5).unwrap().argmax(), Action::Reduce);
    }
}
