from django.urls import path
from .views import DirectionAPIView, OptimizeAPIView, PredictAPIView

app_name = "experiments"

urlpatterns = [
    path("predict", PredictAPIView.as_view(), name="climb-predict"),
    path("direction", DirectionAPIView.as_view(), name="climb-direction"),
    path("optimize", OptimizeAPIView.as_view(), name="climb-optimize"),
]
