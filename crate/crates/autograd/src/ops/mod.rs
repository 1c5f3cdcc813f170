mod conv;
mod elementwise;
mod linalg;
mod loss;
mod norm;
mod recurrent;
mod reduce;
mod shape;
