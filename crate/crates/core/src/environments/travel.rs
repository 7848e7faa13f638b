use serde::{Deserialize, Serialize};

use super::{
    normalize, split_args, split_call, EnvError, EnvKind, EnvMetrics, Environment, Payload,
    StepResult, TaskInstance,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flight {
    pub flight_number: String,
    pub origin: String,
    pub destination: String,
    pub date: String,
    pub departure: String,
    pub arrival: String,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub origin: String,
    pub destination: String,
    /// `self-driving` or `taxi`.
    pub mode: String,
    pub duration: String,
    pub distance_km: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accommodation {
    pub city: String,
    pub name: String,
    pub price: f64,
    pub room_type: String,
    #[serde(default)]
    pub house_rules: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Restaurant {
    pub city: String,
    pub name: String,
    pub cuisines: String,
    pub average_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attraction {
    pub city: String,
    pub name: String,
    #[serde(default)]
    pub address: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityList {
    pub state: String,
    pub cities: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TravelPayload {
    #[serde(default)]
    pub flights: Vec<Flight>,
    #[serde(default)]
    pub distances: Vec<DistanceRow>,
    #[serde(default)]
    pub accommodations: Vec<Accommodation>,
    #[serde(default)]
    pub restaurants: Vec<Restaurant>,
    #[serde(default)]
    pub attractions: Vec<Attraction>,
    #[serde(default)]
    pub cities: Vec<CityList>,
}

/// Eight tools over in-memory tables plus a persistent notebook.
#[derive(Debug, Clone, Default)]
pub struct TravelToy {
    tables: TravelPayload,
    loaded: bool,
    notebook: Vec<String>,
    plan: Option<String>,
    done: bool,
}

const USAGE: &str = "Valid tools: FlightSearch[Departure City, Destination City, Date], \
GoogleDistanceMatrix[Origin, Destination, Mode], AccommodationSearch[City], RestaurantSearch[City], \
AttractionSearch[City], CitySearch[State], NotebookWrite[Content], MakePlan[Query].";

fn same(a: &str, b: &str) -> bool {
    normalize(a) == normalize(b)
}

fn price(value: f64) -> String {
    format!("{value}")
}

impl TravelToy {
    pub fn notebook(&self) -> &[String] {
        &self.notebook
    }

    fn flight_search(&self, args: &[String]) -> String {
        let [origin, destination, date] = args else {
            return format!("Invalid arguments for FlightSearch. {USAGE}");
        };
        let rows: Vec<String> = self
            .tables
            .flights
            .iter()
            .filter(|f| same(&f.origin, origin) && same(&f.destination, destination) && same(&f.date, date))
            .map(|f| {
                format!(
                    "Flight {} | {} -> {} | {} | {}-{} | cost={}",
                    f.flight_number,
                    f.origin,
                    f.destination,
                    f.date,
                    f.departure,
                    f.arrival,
                    price(f.price)
                )
            })
            .collect();
        if rows.is_empty() {
            format!("There is no flight from {origin} to {destination} on {date}.")
        } else {
            rows.join("\n")
        }
    }

    fn distance(&self, args: &[String]) -> String {
        let [origin, destination, mode] = args else {
            return format!("Invalid arguments for GoogleDistanceMatrix. {USAGE}");
        };
        let mode_key = normalize(mode);
        if mode_key != "self-driving" && mode_key != "taxi" {
            return format!("Invalid mode `{mode}`; use self-driving or taxi.");
        }
        match self.tables.distances.iter().find(|d| {
            same(&d.origin, origin) && same(&d.destination, destination) && normalize(&d.mode) == mode_key
        }) {
            Some(d) => format!(
                "{}, from {} to {}, duration: {}, distance: {} km, cost={}",
                d.mode,
                d.origin,
                d.destination,
                d.duration,
                d.distance_km,
                price(d.cost)
            ),
            None => format!("No valid information for {mode} from {origin} to {destination}."),
        }
    }

    fn per_city<T>(&self, rows: &[T], city: &str, what: &str, city_of: fn(&T) -> &str, fmt: fn(&T) -> String) -> String {
        let found: Vec<String> = rows.iter().filter(|r| same(city_of(r), city)).map(fmt).collect();
        if found.is_empty() {
            format!("There is no {what} in {city}.")
        } else {
            found.join("\n")
        }
    }

    fn city_search(&self, state: &str) -> String {
        match self.tables.cities.iter().find(|c| same(&c.state, state)) {
            Some(list) => format!("Cities in {}: {}", list.state, list.cities.join(", ")),
            None => format!("There is no city in {state}; it is not a known state."),
        }
    }

    fn make_plan(&mut self, query: &str) -> String {
        let mut plan = format!("Query: {query}\n");
        for (i, entry) in self.notebook.iter().enumerate() {
            plan.push_str(&format!("[{}] {}\n", i + 1, entry));
        }
        self.plan = Some(plan.clone());
        self.done = true;
        format!("Plan generated:\n{plan}")
    }
}

impl Environment for TravelToy {
    fn kind(&self) -> EnvKind {
        EnvKind::TravelToy
    }

    fn reset(&mut self, task: &TaskInstance) -> Result<String, EnvError> {
        let Payload::TravelToy(payload) = &task.payload else {
            return Err(EnvError::PayloadMismatch {
                task: task.id.clone(),
                expected: EnvKind::TravelToy.as_str(),
                found: task.payload.kind().as_str(),
            });
        };
        *self = TravelToy {
            tables: payload.clone(),
            loaded: true,
            ..TravelToy::default()
        };
        Ok(format!("Query: {}", task.query))
    }

    fn step(&mut self, action: &str) -> Result<StepResult, EnvError> {
        if !self.loaded {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::AlreadyDone);
        }
        let Some((tool, inner)) = split_call(action) else {
            return Ok(StepResult::plain(format!("Invalid action `{}`. {USAGE}", action.trim())));
        };
        let args = split_args(inner);
        let single = inner.trim();
        let observation = match tool {
            "FlightSearch" => self.flight_search(&args),
            "GoogleDistanceMatrix" => self.distance(&args),
            "AccommodationSearch" => self.per_city(
                &self.tables.accommodations,
                single,
                "accommodation",
                |a| &a.city,
                |a| format!("{} | {} | {} | cost={} | rules: {}", a.name, a.city, a.room_type, price(a.price), a.house_rules),
            ),
            "RestaurantSearch" => self.per_city(
                &self.tables.restaurants,
                single,
                "restaurant",
                |r| &r.city,
                |r| format!("{} | {} | {} | cost={}", r.name, r.city, r.cuisines, price(r.average_cost)),
            ),
            "AttractionSearch" => self.per_city(
                &self.tables.attractions,
                single,
                "attraction",
                |a| &a.city,
                |a| format!("{} | {} | {}", a.name, a.city, a.address),
            ),
            "CitySearch" => self.city_search(single),
            "NotebookWrite" => {
                if single.is_empty() {
                    format!("NotebookWrite needs content. {USAGE}")
                } else {
                    self.notebook.push(single.to_string());
                    format!(
                        "The information has been recorded in Notebook, and its index is {}.",
                        self.notebook.len() - 1
                    )
                }
            }
            "MakePlan" => self.make_plan(single),
            _ => format!("Invalid action `{}`. {USAGE}", action.trim()),
        };
        Ok(StepResult {
            observation,
            reward_delta: None,
            done: self.done,
        })
    }

    fn admissible_commands(&self) -> Vec<String> {
        vec![
            "FlightSearch[Departure City, Destination City, Date]: flights between two cities on a date".into(),
            "GoogleDistanceMatrix[Origin, Destination, Mode]: distance, time and cost by self-driving or taxi".into(),
            "AccommodationSearch[City]: accommodations in a city".into(),
            "RestaurantSearch[City]: restaurants in a city".into(),
            "AttractionSearch[City]: attractions in a city".into(),
            "CitySearch[State]: cities within a state".into(),
            "NotebookWrite[Content]: store information in the notebook".into(),
            "MakePlan[Query]: produce the final plan from the query and the notebook".into(),
        ]
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn metrics(&self) -> EnvMetrics {
        EnvMetrics {
            done: self.done,
            delivered: self.plan.is_some(),
            reward: None,
            answer: None,
            plan: self.plan.clone(),
        }
    }
}
