from pathlib import Path

from flask import Flask, redirect, url_for

from config import Config

# Blueprints
from routes.partition_routes import partition_bp
from routes.client_routes import client_bp
from routes.distill_routes import distill_bp
from routes.harness_routes import harness_bp


def create_app(config_object=Config):
    app = Flask(__name__)
    app.config.from_object(config_object)
    app.config.setdefault("RESULTS_STORE", str(Path(app.config["RESULTS_DIR"]) / "results.jsonl"))

    app.register_blueprint(partition_bp)
    app.register_blueprint(client_bp)
    app.register_blueprint(distill_bp)
    app.register_blueprint(harness_bp)

    @app.route("/")
    def dashboard():
        return redirect(url_for("harness_bp.ver_reporte"))

    @app.errorhandler(404)
    def page_not_found(e):
        return {"error": "No encontrado"}, 404

    @app.errorhandler(500)
    def internal_error(e):
        app.logger.error(f"Error interno: {e}")
        return {"error": "Error interno"}, 500

    return app


if __name__ == "__main__":
    app = create_app()

    app.run(
        host="0.0.0.0",
        port=5000,
        debug=Config.DEBUG
    )
