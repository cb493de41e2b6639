//! Event data model, file parsing, and response filtering.
//!
//! The event file is a comma-separated text file with a fixed header:
//!
//! ```text
//! season,playoffs,home_team,away_team,event_type,by_side,scenario,goalie_pulled,home_players,away_players
//! ```
//!
//! Player lists are semicolon-separated ids. `scenario` is either `EVEN` or a
//! code with the advantaged side, e.g. `6v5:HOME`. Identifier fields (seasons,
//! teams, players) are opaque strings; they may not contain the separator
//! characters `,`, `;`, `:` or whitespace.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub type PlayerId = String;
pub type TeamCode = String;
pub type SeasonLabel = String;

pub const EVENT_CSV_HEADER: &str =
    "season,playoffs,home_team,away_team,event_type,by_side,scenario,goalie_pulled,home_players,away_players";

/// Which bench an event or player belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Home,
    Away,
}

impl Side {
    pub fn flipped(self) -> Side {
        match self {
            Side::Home => Side::Away,
            Side::Away => Side::Home,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Side::Home => "HOME",
            Side::Away => "AWAY",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventType {
    Goal,
    Shot,
    Miss,
    Block,
}

impl EventType {
    pub const ALL: [EventType; 4] = [
        EventType::Goal,
        EventType::Shot,
        EventType::Miss,
        EventType::Block,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Goal => "GOAL",
            EventType::Shot => "SHOT",
            EventType::Miss => "MISS",
            EventType::Block => "BLOCK",
        }
    }
}

/// Non-even manpower codes. The first number is the advantaged side's skater
/// count (goalie included), e.g. `6v5` means the advantaged side has six.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioCode {
    S6v5,
    S6v4,
    S6v3,
    S5v4,
    S5v3,
    S4v3,
}

impl ScenarioCode {
    pub const ALL: [ScenarioCode; 6] = [
        ScenarioCode::S6v5,
        ScenarioCode::S6v4,
        ScenarioCode::S6v3,
        ScenarioCode::S5v4,
        ScenarioCode::S5v3,
        ScenarioCode::S4v3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioCode::S6v5 => "6v5",
            ScenarioCode::S6v4 => "6v4",
            ScenarioCode::S6v3 => "6v3",
            ScenarioCode::S5v4 => "5v4",
            ScenarioCode::S5v3 => "5v3",
            ScenarioCode::S4v3 => "4v3",
        }
    }

    pub fn from_str_code(s: &str) -> Option<ScenarioCode> {
        ScenarioCode::ALL.iter().copied().find(|c| c.as_str() == s)
    }

    /// Skater-count difference implied by the code (first minus second number).
    pub fn implied_margin(self) -> i32 {
        match self {
            ScenarioCode::S6v5 | ScenarioCode::S5v4 | ScenarioCode::S4v3 => 1,
            ScenarioCode::S6v4 | ScenarioCode::S5v3 => 2,
            ScenarioCode::S6v3 => 3,
        }
    }
}

/// Special-teams scenario: `Even`, or a manpower code attributed to the
/// advantaged side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialScenario {
    Even,
    Special {
        code: ScenarioCode,
        advantaged_side: Side,
    },
}

impl SpecialScenario {
    pub fn to_field(self) -> String {
        match self {
            SpecialScenario::Even => "EVEN".to_string(),
            SpecialScenario::Special {
                code,
                advantaged_side,
            } => format!("{}:{}", code.as_str(), advantaged_side.as_str()),
        }
    }

    pub fn flipped(self) -> SpecialScenario {
        match self {
            SpecialScenario::Even => SpecialScenario::Even,
            SpecialScenario::Special {
                code,
                advantaged_side,
            } => SpecialScenario::Special {
                code,
                advantaged_side: advantaged_side.flipped(),
            },
        }
    }
}

/// One on-ice event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub season: SeasonLabel,
    pub playoffs: bool,
    pub home_team: TeamCode,
    pub away_team: TeamCode,
    pub event_type: EventType,
    /// Which team produced the event.
    pub by_side: Side,
    pub scenario: SpecialScenario,
    pub goalie_pulled: Option<Side>,
    pub home_players: Vec<PlayerId>,
    pub away_players: Vec<PlayerId>,
}

impl EventRecord {
    /// Checks all structural invariants. Scenario/player-count consistency is
    /// deliberately not among them; see [`scenario_count_warning`].
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.home_team == self.away_team {
            return Err(format!("home and away team are both '{}'", self.home_team));
        }
        for (label, players) in [("home", &self.home_players), ("away", &self.away_players)] {
            if players.is_empty() || players.len() > 6 {
                return Err(format!(
                    "{label} side has {} players, expected 1..=6",
                    players.len()
                ));
            }
            let mut seen = players.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != players.len() {
                return Err(format!("duplicate player id on {label} side"));
            }
        }
        for p in &self.home_players {
            if self.away_players.contains(p) {
                return Err(format!("player '{p}' appears on both sides"));
            }
        }
        for field in [&self.season, &self.home_team, &self.away_team] {
            validate_ident(field)?;
        }
        for p in self.home_players.iter().chain(&self.away_players) {
            validate_ident(p)?;
        }
        Ok(())
    }

    /// On-ice players of the side that produced the event.
    pub fn players_for(&self) -> &[PlayerId] {
        match self.by_side {
            Side::Home => &self.home_players,
            Side::Away => &self.away_players,
        }
    }

    /// On-ice players of the opposing side.
    pub fn players_against(&self) -> &[PlayerId] {
        match self.by_side {
            Side::Home => &self.away_players,
            Side::Away => &self.home_players,
        }
    }

    /// The team a given on-ice player skated for in this event, if present.
    pub fn team_of(&self, player: &str) -> Option<&TeamCode> {
        if self.home_players.iter().any(|p| p == player) {
            Some(&self.home_team)
        } else if self.away_players.iter().any(|p| p == player) {
            Some(&self.away_team)
        } else {
            None
        }
    }

    /// Swaps home and away roles entirely (teams, players, sides, signs).
    pub fn flipped(&self) -> EventRecord {
        EventRecord {
            season: self.season.clone(),
            playoffs: self.playoffs,
            home_team: self.away_team.clone(),
            away_team: self.home_team.clone(),
            event_type: self.event_type,
            by_side: self.by_side.flipped(),
            scenario: self.scenario.flipped(),
            goalie_pulled: self.goalie_pulled.map(Side::flipped),
            home_players: self.away_players.clone(),
            away_players: self.home_players.clone(),
        }
    }
}

fn validate_ident(s: &str) -> std::result::Result<(), String> {
    if s.is_empty() {
        return Err("empty identifier".to_string());
    }
    if let Some(c) = s
        .chars()
        .find(|c| matches!(c, ',' | ';' | ':') || c.is_whitespace() || c.is_control())
    {
        return Err(format!("identifier '{s}' contains forbidden character {c:?}"));
    }
    Ok(())
}

/// Which events count toward the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    Goal,
    Corsi,
    Fenwick,
}

impl ResponseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseKind::Goal => "goal",
            ResponseKind::Corsi => "corsi",
            ResponseKind::Fenwick => "fenwick",
        }
    }

    pub fn from_str_kind(s: &str) -> Option<ResponseKind> {
        match s.to_ascii_lowercase().as_str() {
            "goal" => Some(ResponseKind::Goal),
            "corsi" => Some(ResponseKind::Corsi),
            "fenwick" => Some(ResponseKind::Fenwick),
            _ => None,
        }
    }

    pub fn includes(self, ty: EventType) -> bool {
        match self {
            ResponseKind::Goal => matches!(ty, EventType::Goal),
            ResponseKind::Fenwick => !matches!(ty, EventType::Block),
            ResponseKind::Corsi => true,
        }
    }
}

/// A non-fatal oddity noticed while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

/// Parsed events plus any warnings (warnings never fail the parse).
#[derive(Debug, Clone, Default)]
pub struct ParsedEvents {
    pub events: Vec<EventRecord>,
    pub warnings: Vec<ParseWarning>,
}

/// If the on-ice player counts disagree with what the scenario code implies,
/// returns a description. Raw play-by-play data is noisy here, so this is a
/// warning, never an error; the model uses the scenario code, not the counts.
pub fn scenario_count_warning(rec: &EventRecord) -> Option<String> {
    let actual = rec.home_players.len() as i32 - rec.away_players.len() as i32;
    let implied = match rec.scenario {
        SpecialScenario::Even => 0,
        SpecialScenario::Special {
            code,
            advantaged_side,
        } => match advantaged_side {
            Side::Home => code.implied_margin(),
            Side::Away => -code.implied_margin(),
        },
    };
    if actual != implied {
        Some(format!(
            "scenario {} implies home-away player margin {}, found {}",
            rec.scenario.to_field(),
            implied,
            actual
        ))
    } else {
        None
    }
}

/// Parses the event CSV from a reader. `path` is used in error messages only.
pub fn parse_events(reader: impl BufRead, path: &str) -> Result<ParsedEvents> {
    let mut out = ParsedEvents::default();
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, Ok(line))) => line,
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => return Err(Error::parse(path, 1, "empty file, expected header")),
    };
    if header.trim_end() != EVENT_CSV_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!("bad header, expected '{EVENT_CSV_HEADER}'"),
        ));
    }

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let rec = parse_event_line(&line)
            .map_err(|reason| Error::parse(path, line_no, reason))?;
        if let Some(msg) = scenario_count_warning(&rec) {
            out.warnings.push(ParseWarning {
                line: line_no,
                message: msg,
            });
        }
        out.events.push(rec);
    }
    Ok(out)
}

fn parse_event_line(line: &str) -> std::result::Result<EventRecord, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 10 {
        return Err(format!("expected 10 fields, found {}", fields.len()));
    }
    let playoffs = match fields[1] {
        "0" => false,
        "1" => true,
        other => return Err(format!("playoffs must be 0 or 1, found '{other}'")),
    };
    let event_type = EventType::ALL
        .iter()
        .copied()
        .find(|t| t.as_str() == fields[4])
        .ok_or_else(|| format!("unknown event_type '{}'", fields[4]))?;
    let by_side = parse_side(fields[5])?;
    let scenario = parse_scenario(fields[6])?;
    let goalie_pulled = match fields[7] {
        "NONE" => None,
        "HOME" => Some(Side::Home),
        "AWAY" => Some(Side::Away),
        other => return Err(format!("goalie_pulled must be NONE/HOME/AWAY, found '{other}'")),
    };
    let rec = EventRecord {
        season: fields[0].to_string(),
        playoffs,
        home_team: fields[2].to_string(),
        away_team: fields[3].to_string(),
        event_type,
        by_side,
        scenario,
        goalie_pulled,
        home_players: split_players(fields[8]),
        away_players: split_players(fields[9]),
    };
    rec.validate()?;
    Ok(rec)
}

fn parse_side(s: &str) -> std::result::Result<Side, String> {
    match s {
        "HOME" => Ok(Side::Home),
        "AWAY" => Ok(Side::Away),
        other => Err(format!("side must be HOME or AWAY, found '{other}'")),
    }
}

fn parse_scenario(s: &str) -> std::result::Result<SpecialScenario, String> {
    if s == "EVEN" {
        return Ok(SpecialScenario::Even);
    }
    let (code, side) = s
        .split_once(':')
        .ok_or_else(|| format!("scenario '{s}' must be EVEN or CODE:SIDE"))?;
    let code = ScenarioCode::from_str_code(code)
        .ok_or_else(|| format!("unknown scenario code '{code}'"))?;
    let advantaged_side = parse_side(side)?;
    Ok(SpecialScenario::Special {
        code,
        advantaged_side,
    })
}

fn split_players(s: &str) -> Vec<PlayerId> {
    if s.is_empty() {
        Vec::new()
    } else {
        s.split(';').map(|p| p.to_string()).collect()
    }
}

/// Writes events in the file schema. Inverse of [`parse_events`] on valid records.
pub fn write_events(mut w: impl Write, events: &[EventRecord]) -> std::io::Result<()> {
    writeln!(w, "{EVENT_CSV_HEADER}")?;
    for e in events {
        writeln!(w, "{}", event_line(e))?;
    }
    Ok(())
}

pub fn event_line(e: &EventRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        e.season,
        if e.playoffs { 1 } else { 0 },
        e.home_team,
        e.away_team,
        e.event_type.as_str(),
        e.by_side.as_str(),
        e.scenario.to_field(),
        match e.goalie_pulled {
            None => "NONE",
            Some(s) => s.as_str(),
        },
        e.home_players.join(";"),
        e.away_players.join(";"),
    )
}

/// Keeps only events counted by `kind`, preserving order.
pub fn filter_by_response(events: &[EventRecord], kind: ResponseKind) -> Vec<EventRecord> {
    events
        .iter()
        .filter(|e| kind.includes(e.event_type))
        .cloned()
        .collect()
}

/// The signed response: +1 for a home-side event, -1 for an away-side event.
pub fn response_vector(events: &[EventRecord]) -> Vec<f64> {
    events
        .iter()
        .map(|e| match e.by_side {
            Side::Home => 1.0,
            Side::Away => -1.0,
        })
        .collect()
}

/// Parses the salary file (`player,season,salary_usd`).
pub fn parse_salaries(
    reader: impl BufRead,
    path: &str,
) -> Result<BTreeMap<(PlayerId, SeasonLabel), f64>> {
    let mut out = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if idx == 0 {
            if line.trim_end() != "player,season,salary_usd" {
                return Err(Error::parse(path, 1, "bad header, expected 'player,season,salary_usd'"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, line_no, format!("expected 3 fields, found {}", fields.len())));
        }
        let salary: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad salary '{}'", fields[2])))?;
        if !salary.is_finite() || salary < 0.0 {
            return Err(Error::parse(path, line_no, format!("salary must be finite and >= 0, found {salary}")));
        }
        out.insert((fields[0].to_string(), fields[1].to_string()), salary);
    }
    Ok(out)
}

/// Parses the display-name file (`player,display_name`).
pub fn parse_names(reader: impl BufRead, path: &str) -> Result<BTreeMap<PlayerId, String>> {
    let mut out = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if idx == 0 {
            if line.trim_end() != "player,display_name" {
                return Err(Error::parse(path, 1, "bad header, expected 'player,display_name'"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (player, name) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, line_no, "expected 2 fields"))?;
        out.insert(player.to_string(), name.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_line() -> &'static str {
        "2002-2003,0,COL,DET,GOAL,HOME,EVEN,NONE,f1;f2;f3;d1;d2;g1,F1;F2;F3;D1;D2;G1"
    }

    fn parse_one(line: &str) -> Result<ParsedEvents> {
        let text = format!("{EVENT_CSV_HEADER}\n{line}\n");
        parse_events(text.as_bytes(), "test.csv")
    }

    #[test]
    fn parses_basic_row() {
        let parsed = parse_one(sample_line()).unwrap();
        assert_eq!(parsed.events.len(), 1);
        let e = &parsed.events[0];
        assert_eq!(e.season, "2002-2003");
        assert!(!e.playoffs);
        assert_eq!(e.home_team, "COL");
        assert_eq!(e.away_team, "DET");
        assert_eq!(e.event_type, EventType::Goal);
        assert_eq!(e.by_side, Side::Home);
        assert_eq!(e.scenario, SpecialScenario::Even);
        assert_eq!(e.goalie_pulled, None);
        assert_eq!(e.home_players.len(), 6);
        assert_eq!(e.away_players.len(), 6);
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn rejects_seven_players_with_line_number() {
        let line = "2002-2003,0,COL,DET,GOAL,HOME,EVEN,NONE,a;b;c;d;e;f;g,F1;F2;F3;D1;D2;G1";
        let err = parse_one(line).unwrap_err();
        match err {
            Error::Parse { line, reason, .. } => {
                assert_eq!(line, 2);
                assert!(reason.contains("7 players"), "{reason}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_player_within_side() {
        let line = "2002-2003,0,COL,DET,GOAL,HOME,EVEN,NONE,a;a;c;d;e;f,F1;F2;F3;D1;D2;G1";
        assert!(parse_one(line).is_err());
    }

    #[test]
    fn rejects_player_on_both_sides() {
        let line = "2002-2003,0,COL,DET,GOAL,HOME,EVEN,NONE,a;b;c;d;e;f,a;F2;F3;D1;D2;G1";
        assert!(parse_one(line).is_err());
    }

    #[test]
    fn rejects_unknown_event_type_and_scenario() {
        let line = sample_line().replace("GOAL", "TOUCHDOWN");
        assert!(parse_one(&line).is_err());
        let line = sample_line().replace("EVEN", "7v1:HOME");
        assert!(parse_one(&line).is_err());
        let line = sample_line().replace("EVEN", "6v5");
        assert!(parse_one(&line).is_err(), "side-less special code must fail");
    }

    #[test]
    fn parses_special_scenario_and_pulled_goalie() {
        let line = "2002-2003,1,COL,DET,SHOT,AWAY,6v5:AWAY,AWAY,f1;f2;f3;d1;d2,F1;F2;F3;D1;D2;X6";
        let parsed = parse_one(line).unwrap();
        let e = &parsed.events[0];
        assert!(e.playoffs);
        assert_eq!(
            e.scenario,
            SpecialScenario::Special {
                code: ScenarioCode::S6v5,
                advantaged_side: Side::Away
            }
        );
        assert_eq!(e.goalie_pulled, Some(Side::Away));
        // 5 home vs 6 away matches 6v5:AWAY, so no warning.
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn warns_on_scenario_count_mismatch() {
        // 6 vs 6 players but a 5v4 code claimed.
        let line = sample_line().replace("EVEN", "5v4:HOME");
        let parsed = parse_one(&line).unwrap();
        assert_eq!(parsed.events.len(), 1);
        assert_eq!(parsed.warnings.len(), 1);
        assert_eq!(parsed.warnings[0].line, 2);
    }

    #[test]
    fn filter_fenwick_drops_blocks() {
        let mk = |ty: &str| {
            parse_one(&sample_line().replace("GOAL", ty))
                .unwrap()
                .events
                .remove(0)
        };
        let events = vec![mk("GOAL"), mk("BLOCK"), mk("MISS")];
        let fen = filter_by_response(&events, ResponseKind::Fenwick);
        assert_eq!(
            fen.iter().map(|e| e.event_type).collect::<Vec<_>>(),
            vec![EventType::Goal, EventType::Miss]
        );
        let corsi = filter_by_response(&events, ResponseKind::Corsi);
        assert_eq!(corsi.len(), 3);
        let goal = filter_by_response(&events, ResponseKind::Goal);
        assert_eq!(goal.len(), 1);
    }

    #[test]
    fn response_kinds_are_nested() {
        for ty in EventType::ALL {
            if ResponseKind::Goal.includes(ty) {
                assert!(ResponseKind::Fenwick.includes(ty));
            }
            if ResponseKind::Fenwick.includes(ty) {
                assert!(ResponseKind::Corsi.includes(ty));
            }
        }
    }

    #[test]
    fn response_vector_signs() {
        let home = parse_one(sample_line()).unwrap().events.remove(0);
        let away = parse_one(&sample_line().replace("HOME,EVEN", "AWAY,EVEN"))
            .unwrap()
            .events
            .remove(0);
        let y = response_vector(&[home.clone(), away.clone()]);
        assert_eq!(y, vec![1.0, -1.0]);
        // negating by_side negates the vector elementwise
        let y_flipped = response_vector(&[home.flipped(), away.flipped()]);
        assert_eq!(y_flipped, vec![-1.0, 1.0]);
    }

    #[test]
    fn write_then_parse_round_trips() {
        let lines = [
            sample_line().to_string(),
            "2003-2004,1,BOS,CHI,BLOCK,AWAY,5v3:AWAY,HOME,h1;h2;h3,A1;A2;A3;A4;A5".to_string(),
        ];
        let text = format!("{EVENT_CSV_HEADER}\n{}\n{}\n", lines[0], lines[1]);
        let parsed = parse_events(text.as_bytes(), "t").unwrap();
        let mut buf = Vec::new();
        write_events(&mut buf, &parsed.events).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn parses_salaries_and_names() {
        let sal = parse_salaries(
            "player,season,salary_usd\np1,2002-2003,500000\np2,2002-2003,1.2e6\n".as_bytes(),
            "s",
        )
        .unwrap();
        assert_eq!(sal[&("p1".to_string(), "2002-2003".to_string())], 500000.0);
        assert_eq!(sal[&("p2".to_string(), "2002-2003".to_string())], 1.2e6);
        let names =
            parse_names("player,display_name\np1,PETER FORSBERG\n".as_bytes(), "n").unwrap();
        assert_eq!(names["p1"], "PETER FORSBERG");
        assert!(parse_salaries("bad\n".as_bytes(), "s").is_err());
    }
}
